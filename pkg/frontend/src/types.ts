// Wire types of the access point's HTTP interface.

export interface ReceivedSnapshot {
  request_id: number | null;
  status: "PENDING" | "RECEIVING" | "COMPLETE" | "ERROR" | "TIMEOUT" | null;
  url: string | null;
  chunks_received: number;
  complete: boolean;
  http_status: number | null;
  content: string;
  content_encoding: "utf-8" | "base64";
}

export interface SubmitOk {
  kind: "ok";
  requestId: number;
}

export interface SubmitRejected {
  kind: "rejected";
  status: number; // 400 | 409 | 414
  message: string;
}

export interface SubmitFailed {
  kind: "network-error";
  message: string;
}

export type SubmitResult = SubmitOk | SubmitRejected | SubmitFailed;
