/* tslint:disable */
/* eslint-disable */

/**
 * One rendered sample as canvas-ready RGBA buffers.
 */
export class RenderedSample {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Drawn lesion count per class 1..=5.
     */
    readonly counts: Uint32Array;
    readonly grade: number;
    /**
     * The image with lesion classes painted over it.
     */
    readonly overlay: Uint8Array;
    /**
     * The image, `side × side × 4` bytes.
     */
    readonly rgba: Uint8Array;
    readonly side: number;
}

export function pag_table(taps: Uint32Array, sizes: Uint32Array): string;

export function poly_lr_curve(total: number, lr0: number, power: number): Float64Array;

export function render_sample(seed: number, index: number, size: number): RenderedSample;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_renderedsample_free: (a: number, b: number) => void;
    readonly pag_table: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly poly_lr_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly render_sample: (a: number, b: number, c: number) => [number, number, number];
    readonly renderedsample_counts: (a: number) => [number, number];
    readonly renderedsample_grade: (a: number) => number;
    readonly renderedsample_overlay: (a: number) => [number, number];
    readonly renderedsample_rgba: (a: number) => [number, number];
    readonly renderedsample_side: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
