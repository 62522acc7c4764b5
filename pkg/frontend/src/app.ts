/**
 * DOM layer: renders the pending batch as token spans with drag selection,
 * label buttons, per-item submit, and the live progress dashboard. All
 * behavior goes through SessionController, so this file is only rendering
 * and event wiring.
 */

import { ApiError, ServiceClient } from "./api.js";
import type { Label } from "./api.js";
import { curveSvg } from "./chart.js";
import { SessionController } from "./controller.js";

const POLL_MS = 1000;

interface DragState {
  anchor: { itemId: string; index: number } | null;
  label: Label;
}

export function startApp(root: HTMLElement, client: ServiceClient, sessionId: string): void {
  const controller = new SessionController(client, sessionId);
  const drag: DragState = { anchor: null, label: "PRO" };
  let pollTimer: number | undefined;

  async function refreshAndRender(): Promise<void> {
    await controller.refresh();
    render();
    if (controller.status === "training") {
      window.clearTimeout(pollTimer);
      pollTimer = window.setTimeout(refreshAndRender, POLL_MS);
    }
  }

  function render(): void {
    root.replaceChildren();
    root.appendChild(dashboard());
    if (controller.banner) {
      const banner = document.createElement("div");
      banner.className = `banner banner-${controller.status}`;
      banner.textContent = controller.banner;
      root.appendChild(banner);
    }
    if (controller.status === "finished") {
      root.appendChild(summary());
      return;
    }
    if (controller.batch) {
      root.appendChild(labelPicker());
      const list = document.createElement("div");
      list.className = "cards";
      for (const item of controller.batch.items) {
        list.appendChild(card(item.id));
      }
      root.appendChild(list);
    }
  }

  function dashboard(): HTMLElement {
    const el = document.createElement("div");
    el.className = "dashboard";
    const info = document.createElement("div");
    info.className = "counts";
    info.textContent =
      `session ${sessionId} | status: ${controller.status} | episode ${Math.max(0, controller.episode)} ` +
      `| labeled ${controller.labeled} | unlabeled ${controller.unlabeled}` +
      (controller.batch ? ` | batch remaining ${controller.batch.remaining()}` : "");
    el.appendChild(info);
    const chart = document.createElement("div");
    chart.className = "chart";
    chart.innerHTML = curveSvg(controller.curve);
    el.appendChild(chart);
    return el;
  }

  function summary(): HTMLElement {
    const el = document.createElement("div");
    el.className = "summary";
    const last = controller.curve[controller.curve.length - 1];
    el.textContent = last
      ? `all ${controller.labeled} sentences labeled; final dev macro F1 ${last.dev_macro_f1.toFixed(3)}`
      : "session finished";
    return el;
  }

  function labelPicker(): HTMLElement {
    const el = document.createElement("div");
    el.className = "picker";
    for (const label of ["PRO", "CON", "NON"] as Label[]) {
      const button = document.createElement("button");
      button.textContent = label;
      button.className = `pick pick-${label.toLowerCase()}` + (drag.label === label ? " active" : "");
      button.addEventListener("click", () => {
        drag.label = label;
        render();
      });
      el.appendChild(button);
    }
    const hint = document.createElement("span");
    hint.className = "hint";
    hint.textContent = "drag over tokens to label a span; click a token to cycle labels";
    el.appendChild(hint);
    return el;
  }

  function card(itemId: string): HTMLElement {
    const batch = controller.batch!;
    const item = batch.item(itemId);
    const el = document.createElement("div");
    el.className = `card phase-${item.phase}`;
    const head = document.createElement("div");
    head.className = "card-head";
    head.textContent = `${item.id} [${item.topic}]`;
    el.appendChild(head);

    const sentence = document.createElement("div");
    sentence.className = "tokens";
    item.tokens.forEach((token, index) => {
      const span = document.createElement("span");
      const label = item.labels[index];
      span.className = `token label-${(label ?? "none").toLowerCase()}`;
      span.textContent = token;
      span.dataset.item = item.id;
      span.dataset.index = String(index);
      span.addEventListener("mousedown", (event) => {
        event.preventDefault();
        drag.anchor = { itemId: item.id, index };
      });
      span.addEventListener("mouseup", () => {
        if (!drag.anchor) return;
        const selection = batch.resolveSpan(drag.anchor, { itemId: item.id, index });
        drag.anchor = null;
        if (!selection) return; // cross-sentence drags are rejected
        if (selection.start === selection.end) {
          batch.toggleToken(item.id, index);
        } else {
          batch.labelSpan(selection, drag.label);
        }
        render();
      });
      sentence.appendChild(span);
    });
    el.appendChild(sentence);

    if (item.errorMessage) {
      const err = document.createElement("div");
      err.className = "item-error";
      err.textContent = item.errorMessage;
      el.appendChild(err);
    }

    const submit = document.createElement("button");
    submit.className = "submit";
    submit.textContent =
      item.phase === "submitted" ? "submitted" : item.phase === "locked" ? "locked" : "submit";
    submit.disabled = !batch.canSubmit(item.id);
    submit.addEventListener("click", async () => {
      try {
        await controller.submitItem(item.id);
      } catch (error) {
        if (!(error instanceof ApiError)) {
          // network failure: selections stay, the annotator can retry
        }
      }
      render();
      if (batch.allDone()) {
        await refreshAndRender();
      }
    });
    el.appendChild(submit);
    return el;
  }

  document.addEventListener("mouseup", () => {
    drag.anchor = null;
  });
  void refreshAndRender();
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "";
  const client = new ServiceClient(base);
  let sessionId = params.get("session");
  if (!sessionId) {
    const form = document.createElement("div");
    form.className = "session-form";
    form.innerHTML =
      '<p>No session id given. Paste one, or create a session with POST /sessions first.</p>' +
      '<input id="session-input" placeholder="session id"/> <button id="session-go">open</button>';
    root.appendChild(form);
    const go = form.querySelector("#session-go") as HTMLButtonElement;
    go.addEventListener("click", () => {
      const value = (form.querySelector("#session-input") as HTMLInputElement).value.trim();
      if (value) {
        const url = new URL(window.location.href);
        url.searchParams.set("session", value);
        window.location.href = url.toString();
      }
    });
    return;
  }
  startApp(root, client, sessionId);
}

if (typeof document !== "undefined" && typeof window !== "undefined") {
  void boot();
}
