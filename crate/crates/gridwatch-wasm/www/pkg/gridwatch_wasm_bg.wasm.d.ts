/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const delayBound: (a: number, b: number, c: number) => [number, number, number];
export const gridInfo: (a: number, b: number) => [number, number, number, number];
export const gridNames: () => [number, number];
export const localizeOutage: (a: number, b: number, c: number, d: number, e: bigint, f: number, g: number) => [number, number, number, number];
export const runDetection: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number, h: number, i: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
