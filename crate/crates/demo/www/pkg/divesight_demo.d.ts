/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    class_name(index: number): string;
    epochs_done(): number;
    frame_count(): number;
    frame_rgba(index: number): Uint8Array;
    /**
     * Integrated Gradients for the predicted class of sample `index`.
     */
    integrated_gradients(index: number, steps: number): Explanation;
    constructor(seed: bigint);
    /**
     * Occlusion map for the predicted class of sample `index`.
     */
    occlusion(index: number, patch: number, stride: number): Explanation;
    sample_count(): number;
    sample_label(index: number): string;
    /**
     * RGBA bytes of a held-out sample, ready for `ImageData`.
     */
    sample_rgba(index: number): Uint8Array;
    size(): number;
    /**
     * Classifies the flicker stream (cached per trained model) and smooths
     * it with window `q`.
     */
    stream(q: number): StreamResult;
    /**
     * Trains `epochs` more epochs; returns held-out accuracy in percent.
     */
    train(epochs: number): number;
}

/**
 * A rendered heatmap plus a one-line description.
 */
export class Explanation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    height(): number;
    /**
     * Grayscale bytes, row-major; dark = important.
     */
    pixels(): Uint8Array;
    summary(): string;
    width(): number;
}

/**
 * Smoothed labels of the flicker stream for one window size.
 */
export class StreamResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    raw(): Uint32Array;
    raw_switches(): number;
    smoothed(): Uint32Array;
    switches(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_explanation_free: (a: number, b: number) => void;
    readonly __wbg_streamresult_free: (a: number, b: number) => void;
    readonly demo_class_name: (a: number, b: number) => [number, number];
    readonly demo_epochs_done: (a: number) => number;
    readonly demo_frame_count: (a: number) => number;
    readonly demo_frame_rgba: (a: number, b: number) => [number, number];
    readonly demo_integrated_gradients: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_new: (a: bigint) => [number, number, number];
    readonly demo_occlusion: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_sample_count: (a: number) => number;
    readonly demo_sample_label: (a: number, b: number) => [number, number];
    readonly demo_sample_rgba: (a: number, b: number) => [number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_stream: (a: number, b: number) => [number, number, number];
    readonly demo_train: (a: number, b: number) => [number, number, number];
    readonly explanation_height: (a: number) => number;
    readonly explanation_pixels: (a: number) => [number, number];
    readonly explanation_summary: (a: number) => [number, number];
    readonly explanation_width: (a: number) => number;
    readonly streamresult_raw: (a: number) => [number, number];
    readonly streamresult_raw_switches: (a: number) => number;
    readonly streamresult_smoothed: (a: number) => [number, number];
    readonly streamresult_switches: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
