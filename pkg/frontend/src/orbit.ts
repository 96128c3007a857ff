/** Orbit camera math mirroring the service's conventions:
 * z-up world, camera space x-right / y-down / z-forward,
 * orientation rows are the world-to-camera basis. */

import type { CameraDict } from "./types.js";

export interface OrbitParams {
  center: number[];
  radius: number;
  azimuthDeg: number;
  elevationDeg: number;
  fovDeg: number;
  width: number;
  height: number;
}

function sub(a: number[], b: number[]): number[] {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: number[], b: number[]): number[] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: number[]): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function unit(a: number[]): number[] {
  const n = norm(a);
  return [a[0] / n, a[1] / n, a[2] / n];
}

export function lookAt(position: number[], target: number[], fovDeg: number,
                       width: number, height: number, up: number[] = [0, 0, 1]): CameraDict {
  const forward = unit(sub(target, position));
  let right = cross(forward, up);
  if (norm(right) < 1e-9) {
    right = cross(forward, [0, 1, 0]);
  }
  right = unit(right);
  const down = cross(forward, right);
  return {
    position,
    orientation: [right, down, forward],
    vertical_fov_degrees: fovDeg,
    width,
    height,
    near: 0.01,
    far: 100.0,
  };
}

export function orbitCamera(p: OrbitParams): CameraDict {
  const az = (p.azimuthDeg * Math.PI) / 180;
  const el = (p.elevationDeg * Math.PI) / 180;
  const offset = [
    p.radius * Math.cos(el) * Math.cos(az),
    p.radius * Math.cos(el) * Math.sin(az),
    p.radius * Math.sin(el),
  ];
  const position = [
    p.center[0] + offset[0],
    p.center[1] + offset[1],
    p.center[2] + offset[2],
  ];
  return lookAt(position, p.center, p.fovDeg, p.width, p.height);
}

/** Clamp elevation away from the poles so the up vector stays valid. */
export function clampElevation(deg: number): number {
  return Math.max(-88, Math.min(88, deg));
}

export function wrapAzimuth(deg: number): number {
  let d = deg % 360;
  if (d < 0) d += 360;
  return d;
}
