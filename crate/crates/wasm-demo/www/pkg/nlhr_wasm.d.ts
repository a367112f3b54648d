/* tslint:disable */
/* eslint-disable */

/**
 * Axial power spectra in dB relative to each line's peak, on frequencies in
 * units of the center frequency. The raw product is shown before the 2 f0
 * band-pass. Layout: `[freq; n] ++ [das; n] ++ [product; n] ++ [nlhr; n]`.
 */
export function axial_spectrum(depth_mm: number, f_number: number, alpha_deg: number, signed_sqrt: boolean): Float64Array;

/**
 * Axial RF lines through a point target, each scaled to unit peak.
 * Layout: `[depth_mm; n] ++ [das; n] ++ [nlhr; n]`.
 */
export function point_spread(depth_mm: number, f_number: number, alpha_deg: number, signed_sqrt: boolean): Float64Array;

/**
 * Left and right sub-aperture weights over the array for a pixel.
 * Layout: `[element_x_mm; n] ++ [left; n] ++ [right; n]`; a side whose
 * center falls off the array is all zeros.
 */
export function subaperture_apodization(num_elements: number, pitch_mm: number, f_number: number, x_mm: number, z_mm: number, alpha_deg: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly axial_spectrum: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly point_spread: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly subaperture_apodization: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
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
