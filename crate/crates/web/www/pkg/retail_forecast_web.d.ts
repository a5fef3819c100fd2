/* tslint:disable */
/* eslint-disable */

/**
 * Planted two-harmonic cycle over `months`, with Gaussian noise. Fits the
 * first `fit_months` at `order` and returns `[observed..., fitted...]`.
 */
export function fourier_forecast(seed: bigint, months: number, fit_months: number, order: number, noise: number): Float64Array;

/**
 * RP@p for p = 0.01, 0.02, ..., 1.00 of the forecast `scale * mu` against
 * `n` draws from Tw(mu, phi, rho).
 */
export function rp_curve(mu: number, phi: number, rho: number, scale: number, n: number, seed: bigint): Float64Array;

/**
 * `n` density values on an even grid over `(0, y_max]`, followed by the
 * point mass at zero as the last element.
 */
export function tweedie_curve(mu: number, phi: number, rho: number, y_max: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly fourier_forecast: (a: bigint, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly rp_curve: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly tweedie_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
