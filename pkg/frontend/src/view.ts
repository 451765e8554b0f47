// Pure mapping from the latest /received snapshot to what the page shows.
// Rendering state is a function of the snapshot alone, so a refresh loses
// nothing and progress can never run backwards for a given request.

import type { ReceivedSnapshot } from "./types.js";

export type ContentMode = "none" | "html" | "text" | "binary";

export interface ViewModel {
  statusLine: string;
  chunksReceived: number;
  showSpinner: boolean;
  contentMode: ContentMode;
  content: string;
  isError: boolean;
}

export function toViewModel(snap: ReceivedSnapshot): ViewModel {
  const base: ViewModel = {
    statusLine: "No transfer yet.",
    chunksReceived: snap.chunks_received,
    showSpinner: false,
    contentMode: "none",
    content: "",
    isError: false,
  };
  switch (snap.status) {
    case null:
      return base;
    case "PENDING":
      return { ...base, statusLine: `Requested ${snap.url} ...`, showSpinner: true };
    case "RECEIVING":
      return {
        ...base,
        statusLine: `Receiving: ${snap.chunks_received} chunk(s) so far`,
        showSpinner: true,
        ...partialContent(snap),
      };
    case "COMPLETE":
      return {
        ...base,
        statusLine: `Done: ${snap.chunks_received} chunk(s) received`,
        ...finalContent(snap),
      };
    case "ERROR":
      return {
        ...base,
        statusLine: `Origin returned ${snap.http_status ?? "an error"}`,
        isError: true,
      };
    case "TIMEOUT":
      return {
        ...base,
        statusLine: `Timed out after ${snap.chunks_received} chunk(s); partial content below`,
        isError: true,
        ...partialContent(snap),
      };
  }
}

function partialContent(snap: ReceivedSnapshot): Partial<ViewModel> {
  if (snap.content_encoding === "base64") {
    return { contentMode: "binary", content: binaryNote(snap) };
  }
  return { contentMode: "text", content: snap.content };
}

function finalContent(snap: ReceivedSnapshot): Partial<ViewModel> {
  if (snap.content_encoding === "base64") {
    return { contentMode: "binary", content: binaryNote(snap) };
  }
  if (looksLikeHtml(snap.content)) {
    return { contentMode: "html", content: snap.content };
  }
  return { contentMode: "text", content: snap.content };
}

export function looksLikeHtml(text: string): boolean {
  const head = text.trimStart().slice(0, 200).toLowerCase();
  return head.startsWith("<!doctype html") || head.startsWith("<html") ||
    /<(p|h[1-6]|div|body|head|title)\b/.test(head);
}

function binaryNote(snap: ReceivedSnapshot): string {
  const bytes = Math.floor((snap.content.length * 3) / 4);
  return `Binary content (~${bytes} bytes, base64-encoded). Save it from /received.`;
}

// Guards the "progress never decreases" invariant across polls of one request.
export function monotoneChunks(
  previous: { requestId: number | null; chunks: number },
  snap: ReceivedSnapshot,
): { requestId: number | null; chunks: number } {
  if (snap.request_id === previous.requestId) {
    return {
      requestId: previous.requestId,
      chunks: Math.max(previous.chunks, snap.chunks_received),
    };
  }
  return { requestId: snap.request_id, chunks: snap.chunks_received };
}
