/* tslint:disable */
/* eslint-disable */

export class Path {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `sum |u|^2 dt` of the planned forces.
     */
    readonly energy: number;
    /**
     * Smallest keep-out function value along the path; negative inside.
     */
    readonly min_value: number;
    readonly xs: Float64Array;
    readonly ys: Float64Array;
}

export class Rollout {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Interleaved `x, y` of the agent at index `agent`.
     */
    path(agent: number): Float64Array;
    /**
     * Ticks where the filter changed the tracking command.
     */
    readonly filtered_ticks: number;
    /**
     * Braking-distance barrier value per tick.
     */
    readonly h: Float64Array;
}

/**
 * Minimum uniform scaling of two rectangles about their own centers.
 * Returns `[s, contact_x, contact_y, ds/dx, ds/dy, degenerate]`, the
 * gradient taken with respect to the first center.
 */
export function box_scaling(ax: number, ay: number, aw: number, ah: number, ayaw: number, bx: number, by: number, bw: number, bh: number, byaw: number): Float64Array;

/**
 * Two agents swapping ends of a `2 half_span` segment, the second path
 * offset sideways by `offset`, each tracking its reference with a PD law
 * through the pairwise braking filter with class-K gain `gain`.
 */
export function filtered_crossing(half_span: number, offset: number, gain: number, transfer_time: number): Rollout;

/**
 * Minimum-energy rest-to-rest transfer around an ellipse with semi-axes
 * `a`, `b`, padded by the agent's bounding radius.
 */
export function plan_around(sx: number, sy: number, gx: number, gy: number, a: number, b: number, total_time: number): Path;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_path_free: (a: number, b: number) => void;
    readonly __wbg_rollout_free: (a: number, b: number) => void;
    readonly box_scaling: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number, number];
    readonly filtered_crossing: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly path_energy: (a: number) => number;
    readonly path_min_value: (a: number) => number;
    readonly path_xs: (a: number) => [number, number];
    readonly path_ys: (a: number) => [number, number];
    readonly plan_around: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly rollout_filtered_ticks: (a: number) => number;
    readonly rollout_h: (a: number) => [number, number];
    readonly rollout_path: (a: number, b: number) => [number, number];
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
