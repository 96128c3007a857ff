/** DOM wiring: sliders, orbit camera, frame display, status + metrics. */

import { browserTransport } from "./api.js";
import { clampElevation, orbitCamera, wrapAzimuth } from "./orbit.js";
import { ViewerSession } from "./session.js";
import type { ViewerState } from "./types.js";

const realScheduler = {
  setTimeout: (fn: () => void, ms: number) => window.setTimeout(fn, ms),
  clearTimeout: (id: number) => window.clearTimeout(id),
  now: () => performance.now(),
};

interface OrbitState {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  center: number[];
}

function orbitFromState(state: ViewerState): OrbitState {
  const p = state.camera.position;
  const r = Math.hypot(p[0], p[1], p[2]);
  return {
    azimuthDeg: wrapAzimuth((Math.atan2(p[1], p[0]) * 180) / Math.PI),
    elevationDeg: clampElevation((Math.asin(p[2] / Math.max(r, 1e-9)) * 180) / Math.PI),
    radius: r,
    center: [0, 0, 0],
  };
}

export async function start(root: HTMLElement, serviceUrl: string): Promise<ViewerSession> {
  const session = new ViewerSession(browserTransport(serviceUrl), realScheduler);

  const banner = el("div", "banner");
  const image = document.createElement("img");
  image.className = "frame";
  const controls = el("div", "controls");
  const metricsBox = el("div", "metrics");
  root.append(banner, image, controls, metricsBox);

  let frameUrl: string | null = null;
  session.onFrame = (frame) => {
    const blob = new Blob([frame.png.slice()], { type: "image/png" });
    if (frameUrl) {
      URL.revokeObjectURL(frameUrl);
    }
    frameUrl = URL.createObjectURL(blob);
    image.src = frameUrl;
    metricsBox.dataset.seq = String(frame.seq);
    if (frame.latencyMs !== null) {
      metricsBox.dataset.latency = frame.latencyMs.toFixed(1);
    }
    void refreshMetrics();
  };
  session.onStatus = (status) => {
    banner.textContent = status === "connected" ? "" : `service: ${status}`;
    banner.classList.toggle("visible", status !== "connected");
  };

  async function refreshMetrics() {
    try {
      const m = await session.fetchMetrics();
      metricsBox.textContent =
        `${m.visiblePoints.toLocaleString()} / ${m.totalPoints.toLocaleString()} points` +
        (m.lastFrameMs ? ` - ${m.lastFrameMs.toFixed(0)} ms` : "");
    } catch {
      // metrics are advisory; never break the UI over them
    }
  }

  await session.connect();
  const state = session.state!;
  const orbit = orbitFromState(state);

  buildControls(controls, session, orbit);
  attachOrbitMouse(image, session, orbit, state.camera.width, state.camera.height);
  return session;
}

function buildControls(parent: HTMLElement, session: ViewerSession, orbit: OrbitState) {
  parent.textContent = "";

  const assets = select("asset", session.assets.map((a) => a.id),
    session.state!.assetId, (id) => session.setControl("assetId", id));
  assets.dataset.field = "assetId";
  parent.append(assets);

  for (let i = 0; i < session.blendshapeCount; i += 1) {
    const s = slider(`blendshape ${i}`, 0, 1, 0.01, session.state!.weights[i],
      (v) => session.setControl(`weights.${i}`, v));
    s.dataset.field = "weights";
    parent.append(s);
  }

  const prune = slider("prune sigma", 0, 0.9, 0.005, session.state!.pruneThreshold,
    (v) => session.setControl("pruneThreshold", v));
  prune.dataset.field = "pruneThreshold";
  parent.append(prune);

  // surface 400 responses inline on the offending control
  session.onFieldErrors = (errors) => {
    for (const node of Array.from(parent.querySelectorAll<HTMLElement>("[data-field]"))) {
      const box = node.querySelector<HTMLElement>(".error");
      if (box) {
        box.textContent = errors[node.dataset.field ?? ""] ?? "";
      }
    }
  };

  const applyOrbit = () => {
    const cam = session.state!.camera;
    session.setControl("camera", orbitCamera({
      center: orbit.center, radius: orbit.radius,
      azimuthDeg: orbit.azimuthDeg, elevationDeg: orbit.elevationDeg,
      fovDeg: cam.vertical_fov_degrees, width: cam.width, height: cam.height,
    }));
  };
  parent.append(slider("azimuth", 0, 360, 1, orbit.azimuthDeg, (v) => {
    orbit.azimuthDeg = v;
    applyOrbit();
  }));
  parent.append(slider("elevation", -88, 88, 1, orbit.elevationDeg, (v) => {
    orbit.elevationDeg = v;
    applyOrbit();
  }));
  parent.append(slider("distance", 0.5, 10, 0.05, orbit.radius, (v) => {
    orbit.radius = v;
    applyOrbit();
  }));
}

function attachOrbitMouse(target: HTMLElement, session: ViewerSession,
                          orbit: OrbitState, width: number, height: number) {
  let dragging = false;
  let last = [0, 0];
  target.addEventListener("mousedown", (e) => {
    dragging = true;
    last = [e.clientX, e.clientY];
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (e) => {
    if (!dragging) {
      return;
    }
    orbit.azimuthDeg = wrapAzimuth(orbit.azimuthDeg - (e.clientX - last[0]) * 0.5);
    orbit.elevationDeg = clampElevation(orbit.elevationDeg + (e.clientY - last[1]) * 0.5);
    last = [e.clientX, e.clientY];
    const cam = session.state!.camera;
    session.setControl("camera", orbitCamera({
      center: orbit.center, radius: orbit.radius,
      azimuthDeg: orbit.azimuthDeg, elevationDeg: orbit.elevationDeg,
      fovDeg: cam.vertical_fov_degrees, width, height,
    }));
  });
  target.addEventListener("wheel", (e) => {
    e.preventDefault();
    orbit.radius = Math.max(0.5, Math.min(10, orbit.radius * (1 + e.deltaY * 1e-3)));
    const cam = session.state!.camera;
    session.setControl("camera", orbitCamera({
      center: orbit.center, radius: orbit.radius,
      azimuthDeg: orbit.azimuthDeg, elevationDeg: orbit.elevationDeg,
      fovDeg: cam.vertical_fov_degrees, width, height,
    }));
  });
}

function slider(label: string, min: number, max: number, step: number, value: number,
                onInput: (v: number) => void): HTMLElement {
  const wrap = el("label", "slider");
  const text = el("span");
  text.textContent = label;
  const input = document.createElement("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.value = String(value);
  const readout = el("span", "value");
  readout.textContent = value.toFixed(2);
  input.addEventListener("input", () => {
    const v = Math.max(min, Math.min(max, Number(input.value)));
    readout.textContent = v.toFixed(2);
    onInput(v);
  });
  const error = el("span", "error");
  wrap.append(text, input, readout, error);
  return wrap;
}

function select(label: string, options: string[], value: string,
                onChange: (v: string) => void): HTMLElement {
  const wrap = el("label", "slider");
  const text = el("span");
  text.textContent = label;
  const sel = document.createElement("select");
  for (const opt of options) {
    const o = document.createElement("option");
    o.value = opt;
    o.textContent = opt;
    if (opt === value) {
      o.selected = true;
    }
    sel.append(o);
  }
  sel.addEventListener("change", () => onChange(sel.value));
  wrap.append(text, sel);
  return wrap;
}

function el(tag: string, cls?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) {
    node.className = cls;
  }
  return node;
}
