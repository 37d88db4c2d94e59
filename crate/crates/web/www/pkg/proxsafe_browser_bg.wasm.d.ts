/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_path_free: (a: number, b: number) => void;
export const __wbg_rollout_free: (a: number, b: number) => void;
export const box_scaling: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number, number];
export const filtered_crossing: (a: number, b: number, c: number, d: number) => [number, number, number];
export const path_energy: (a: number) => number;
export const path_min_value: (a: number) => number;
export const path_xs: (a: number) => [number, number];
export const path_ys: (a: number) => [number, number];
export const plan_around: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const rollout_filtered_ticks: (a: number) => number;
export const rollout_h: (a: number) => [number, number];
export const rollout_path: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
