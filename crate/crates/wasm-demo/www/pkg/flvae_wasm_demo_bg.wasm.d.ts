/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_flowview_free: (a: number, b: number) => void;
export const classes: () => number;
export const flowView: (a: number, b: number, c: number) => [number, number, number];
export const flowview_mean: (a: number) => number;
export const flowview_peak: (a: number) => number;
export const flowview_rgba: (a: number) => [number, number];
export const frameRgba: (a: number, b: number, c: number) => [number, number, number, number];
export const frameSize: () => number;
export const frames: () => number;
export const klToPrior: (a: number, b: number) => [number, number, number];
export const reparamHistogram: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
