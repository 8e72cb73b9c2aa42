/* tslint:disable */
/* eslint-disable */

/**
 * TV-L1 flow between frames `frame` and `frame + 1`.
 */
export class FlowView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Mean displacement in pixels.
     */
    readonly mean: number;
    readonly peak: number;
    /**
     * Magnitude as 48x48 RGBA, scaled so `peak` maps to full intensity.
     */
    readonly rgba: Uint8Array;
}

export function classes(): number;

export function flowView(_class: number, frame: number, seed: number): FlowView;

export function frameRgba(_class: number, frame: number, seed: number): Uint8Array;

export function frameSize(): number;

export function frames(): number;

export function klToPrior(mean: number, logvar: number): number;

export function reparamHistogram(mean: number, logvar: number, samples: number, bins: number, seed: number): Uint32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_flowview_free: (a: number, b: number) => void;
    readonly classes: () => number;
    readonly flowView: (a: number, b: number, c: number) => [number, number, number];
    readonly flowview_mean: (a: number) => number;
    readonly flowview_peak: (a: number) => number;
    readonly flowview_rgba: (a: number) => [number, number];
    readonly frameRgba: (a: number, b: number, c: number) => [number, number, number, number];
    readonly frameSize: () => number;
    readonly frames: () => number;
    readonly klToPrior: (a: number, b: number) => [number, number, number];
    readonly reparamHistogram: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
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
