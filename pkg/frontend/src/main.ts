// Page wiring: form submit -> POST /submit, then poll /received and paint.

import { ApnClient, rejectionMessage } from "./client.js";
import { Poller } from "./poller.js";
import { monotoneChunks, toViewModel } from "./view.js";
import type { ReceivedSnapshot } from "./types.js";

const form = document.getElementById("submit-form") as HTMLFormElement;
const urlInput = document.getElementById("url-input") as HTMLInputElement;
const submitButton = document.getElementById("submit-button") as HTMLButtonElement;
const banner = document.getElementById("banner") as HTMLElement;
const statusLine = document.getElementById("status-line") as HTMLElement;
const chunkCounter = document.getElementById("chunk-counter") as HTMLElement;
const textView = document.getElementById("text-view") as HTMLPreElement;
const htmlView = document.getElementById("html-view") as HTMLIFrameElement;

const client = new ApnClient("");
let progress: { requestId: number | null; chunks: number } =
  { requestId: null, chunks: 0 };

function showBanner(message: string, kind: "error" | "info"): void {
  banner.textContent = message;
  banner.className = kind;
  banner.hidden = message === "";
}

function paint(snap: ReceivedSnapshot): void {
  progress = monotoneChunks(progress, snap);
  const vm = toViewModel({ ...snap, chunks_received: progress.chunks });
  statusLine.textContent = vm.statusLine + (vm.showSpinner ? " ⏳" : "");
  statusLine.className = vm.isError ? "error" : "";
  chunkCounter.textContent = `${progress.chunks}`;
  textView.hidden = vm.contentMode !== "text" && vm.contentMode !== "binary";
  htmlView.hidden = vm.contentMode !== "html";
  if (vm.contentMode === "html") {
    // sandbox attribute (no allow-scripts) keeps fetched pages inert; the
    // coordinator strips scripts anyway
    htmlView.srcdoc = vm.content;
  } else {
    textView.textContent = vm.content;
  }
}

const poller = new Poller(client, {
  onSnapshot: paint,
  onGaveUp: (reason) =>
    showBanner(`Lost contact with the access point (${reason}); ` +
      "refresh to retry.", "error"),
});

form.addEventListener("submit", (event) => {
  event.preventDefault();
  void submitUrl();
});

async function submitUrl(): Promise<void> {
  const url = urlInput.value.trim();
  if (url === "") {
    showBanner("Enter a URL first.", "error");
    return;
  }
  submitButton.disabled = true;
  try {
    const result = await client.submit(url);
    switch (result.kind) {
      case "ok":
        showBanner("", "info");
        progress = { requestId: result.requestId, chunks: 0 };
        poller.start();
        break;
      case "rejected":
        // 409 leaves the in-progress view untouched
        showBanner(rejectionMessage(result.status, result.message), "error");
        break;
      case "network-error":
        showBanner(`Could not reach the access point (${result.message}); ` +
          "try again.", "error");
        break;
    }
  } finally {
    submitButton.disabled = false;
  }
}

// refresh-safe: rebuild the view from /received alone on load
void (async () => {
  try {
    const snap = await client.received();
    if (snap.status !== null) {
      paint(snap);
      if (snap.status === "PENDING" || snap.status === "RECEIVING") {
        poller.start();
      }
    }
  } catch {
    // page served but APN briefly unreachable: leave the empty state
  }
})();
