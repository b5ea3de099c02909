/* tslint:disable */
/* eslint-disable */

/**
 * ε-ball check of the noncompact example on a `cells × cells` mesh.
 *
 * Returns `[C_D, ε_max, ε, radius, max F̂_N, F̂_N(0)]`; `eps_fraction` scales `ε_max`.
 */
export function appendix_ball(cells: number, samples: number, seed: number, eps_fraction: number): Float64Array;

/**
 * Burgers control problem for one fixed sample.
 *
 * Returns `[x, state, adjoint, gradient]` concatenated over the `n + 2` nodes,
 * followed by `J₁`.
 */
export function burgers_profiles(n: number, kappa: number, load_scale: number, control: number): Float64Array;

/**
 * Discrete Friedrichs constants of `H₀¹(0, 1)` for each interior node count.
 */
export function friedrichs_sequence(sizes: Uint32Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly appendix_ball: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly burgers_profiles: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly friedrichs_sequence: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
