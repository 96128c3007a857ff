/** Browser transport: fetch + WebSocket against the render service. */

import { parseFrame } from "./framing.js";
import { ServiceError, StreamHandle, StreamHandlers, Transport } from "./session.js";

export function browserTransport(baseUrl: string): Transport {
  const http = baseUrl.replace(/\/$/, "");
  const ws = http.replace(/^http/, "ws");
  return {
    async getJson(path: string): Promise<unknown> {
      const res = await fetch(http + path);
      if (!res.ok) {
        throw new ServiceError(res.status, await detail(res));
      }
      return res.json();
    },
    async postJson(path: string, body: unknown): Promise<unknown> {
      const res = await fetch(http + path, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      if (!res.ok) {
        throw new ServiceError(res.status, await detail(res));
      }
      return res.json();
    },
    openStream(handlers: StreamHandlers): StreamHandle {
      const socket = new WebSocket(ws + "/stream");
      socket.binaryType = "arraybuffer";
      socket.onmessage = (event) => {
        if (typeof event.data === "string") {
          try {
            handlers.onMeta(JSON.parse(event.data).seq as number);
          } catch {
            // non-JSON text frames are ignored
          }
        } else {
          handlers.onFrame(parseFrame(event.data as ArrayBuffer));
        }
      };
      socket.onclose = () => handlers.onClose();
      socket.onerror = () => socket.close();
      return { close: () => socket.close() };
    },
  };
}

async function detail(res: Response) {
  try {
    const body = (await res.json()) as { detail?: { field: string; message: string } };
    return body.detail ?? null;
  } catch {
    return null;
  }
}
