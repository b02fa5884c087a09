export type Axis = "x" | "y" | "z";

export type Orientation = "forward" | "reversed";

export interface SessionInfo {
  dims: [number, number, number];
  spacing: [number, number, number];
  n_fragments: number;
  hyperparams: Record<string, number>;
}

export interface PickResult {
  fragment: number;
  distance_px: number;
}

export interface TraceRequest {
  start_fragment: number;
  start_orientation: Orientation;
  end_fragment: number;
  end_orientation: Orientation;
  name?: string;
}

export interface TracePayload {
  id: number;
  name: string;
  states: number[];
  weight: number;
  log_prob: number;
  polyline_um: [number, number, number][];
}

export interface FragmentEndpoints {
  id: number;
  x0_px: [number, number];
  x1_px: [number, number];
}
