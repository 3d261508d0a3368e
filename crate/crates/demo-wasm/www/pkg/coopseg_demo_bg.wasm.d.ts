/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_renderedsample_free: (a: number, b: number) => void;
export const pag_table: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const poly_lr_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const render_sample: (a: number, b: number, c: number) => [number, number, number];
export const renderedsample_counts: (a: number) => [number, number];
export const renderedsample_grade: (a: number) => number;
export const renderedsample_overlay: (a: number) => [number, number];
export const renderedsample_rgba: (a: number) => [number, number];
export const renderedsample_side: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
