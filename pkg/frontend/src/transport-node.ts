/** TCP transport for node: used by the test driver and the terminal demo.
 * Browsers use a WebSocket-to-TCP bridge with the same Transport shape. */

import * as net from "node:net";
import type { Transport } from "./protocol.js";

export class TcpTransport implements Transport {
  private dataCbs: ((chunk: string) => void)[] = [];
  private closeCbs: (() => void)[] = [];

  private constructor(private socket: net.Socket) {
    socket.setEncoding("utf-8");
    socket.on("data", (chunk: string) => {
      for (const cb of this.dataCbs) cb(chunk);
    });
    socket.on("close", () => {
      for (const cb of this.closeCbs) cb();
    });
    socket.on("error", () => {
      /* surfaced via close */
    });
  }

  static connect(host: string, port: number): Promise<TcpTransport> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port }, () =>
        resolve(new TcpTransport(socket)),
      );
      socket.once("error", reject);
    });
  }

  send(data: string): void {
    this.socket.write(data);
  }

  onData(cb: (chunk: string) => void): void {
    this.dataCbs.push(cb);
  }

  onClose(cb: () => void): void {
    this.closeCbs.push(cb);
  }

  close(): void {
    this.socket.end();
    this.socket.destroy();
  }
}
