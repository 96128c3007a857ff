export interface CameraDict {
  position: number[];
  orientation: number[][];
  vertical_fov_degrees: number;
  width: number;
  height: number;
  near: number;
  far: number;
}

export interface ViewerState {
  assetId: string;
  weights: number[];
  camera: CameraDict;
  pruneThreshold: number;
  background: number[];
  seq: number;
}

export interface AssetInfo {
  id: string;
  points: number;
  blendshapes: number;
  shDegree: number;
}

export interface Metrics {
  renders: number;
  lastFrameMs: number | null;
  meanFrameMs: number | null;
  assetId: string;
  totalPoints: number;
  visiblePoints: number;
  seq: number;
}

export interface FieldError {
  field: string;
  message: string;
}

export type ConnectionStatus = "connecting" | "connected" | "reconnecting" | "failed";
