/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_explanation_free: (a: number, b: number) => void;
export const __wbg_streamresult_free: (a: number, b: number) => void;
export const demo_class_name: (a: number, b: number) => [number, number];
export const demo_epochs_done: (a: number) => number;
export const demo_frame_count: (a: number) => number;
export const demo_frame_rgba: (a: number, b: number) => [number, number];
export const demo_integrated_gradients: (a: number, b: number, c: number) => [number, number, number];
export const demo_new: (a: bigint) => [number, number, number];
export const demo_occlusion: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_sample_count: (a: number) => number;
export const demo_sample_label: (a: number, b: number) => [number, number];
export const demo_sample_rgba: (a: number, b: number) => [number, number];
export const demo_size: (a: number) => number;
export const demo_stream: (a: number, b: number) => [number, number, number];
export const demo_train: (a: number, b: number) => [number, number, number];
export const explanation_height: (a: number) => number;
export const explanation_pixels: (a: number) => [number, number];
export const explanation_summary: (a: number) => [number, number];
export const explanation_width: (a: number) => number;
export const streamresult_raw: (a: number) => [number, number];
export const streamresult_raw_switches: (a: number) => number;
export const streamresult_smoothed: (a: number) => [number, number];
export const streamresult_switches: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
