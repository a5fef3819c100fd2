fn main() {
    std::process::exit(retail_forecast::cli::main_with_args(std::env::args_os()));
}
