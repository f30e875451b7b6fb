/**
 * DOM rendering: the episode timeline and the intervention card.
 *
 * Screenshot clicks map through displayToDevice and every submission is
 * built from a typed Action, so only grammar-valid lines leave the page.
 */

import { isValidActionLine, parseAction, SCROLL_DIRS, type Action } from "./actions.js";
import { displayToDevice } from "./coords.js";
import type { EpisodeConsole } from "./console.js";
import type { ConsoleSession, TimelineStep } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderStatus(root: HTMLElement, session: ConsoleSession): void {
  root.textContent = "";
  root.append(
    el("span", "instruction", session.instructionText || session.episodeId),
    el("span", `status status-${session.status.toLowerCase()}`, session.status),
    el("span", "gamma", `gate: score < ${session.gamma} intervenes`),
  );
}

function confidenceBadge(confidence: number | undefined, gamma: number): HTMLElement {
  if (confidence === undefined) {
    return el("span", "confidence unknown", "-");
  }
  const gated = confidence < gamma;
  const badge = el("span", `confidence ${gated ? "below-gate" : "above-gate"}`,
    `${confidence}/5`);
  badge.title = gated
    ? `score ${confidence} is below the gate (${gamma})`
    : `score ${confidence} clears the gate (${gamma})`;
  return badge;
}

function timelineRow(step: TimelineStep, gamma: number): HTMLElement {
  const row = el("div", `step ${step.intervened ? "intervened" : "autonomous"}`);
  row.append(
    el("span", "step-index", `#${step.index}`),
    el("span", "proposed", step.proposedAction ?? ""),
    confidenceBadge(step.confidence, gamma),
    el("span", "decision", step.decision ?? ""),
    el("span", "executed", step.executedAction ? `ran ${step.executedAction}` : ""),
  );
  if (step.intervened) {
    row.append(el("span", "intervened-tag", "guided"));
  }
  return row;
}

export function renderTimeline(root: HTMLElement, session: ConsoleSession): void {
  root.textContent = "";
  for (const step of session.steps) {
    root.append(timelineRow(step, session.gamma));
  }
  if (session.terminal) {
    root.append(el("div", "terminal", `episode ${session.status}`));
  }
}

export function renderCard(root: HTMLElement, app: EpisodeConsole): void {
  const session = app.session;
  root.textContent = "";
  const pending = session.pending;
  if (!pending) {
    root.append(el("div", "card-empty",
      session.terminal ? "episode finished" : "no intervention pending"));
    return;
  }

  const card = el("div", "card");
  const header = el("div", "card-header");
  header.append(
    el("span", undefined, `step #${pending.stepIndex} stalled`),
    confidenceBadge(pending.confidence, session.gamma),
    el("span", "proposed", `proposed: ${pending.proposedAction}`),
  );
  card.append(header);

  const img = el("img", "screenshot") as HTMLImageElement;
  img.src = app.screenshotUrl(pending.screenshotId);
  img.alt = `screen ${pending.screenshotId}; click to send a CLICK there`;
  img.addEventListener("click", (event) => {
    const rect = img.getBoundingClientRect();
    const rendered = {
      width: img.clientWidth || img.naturalWidth || pending.dims.width,
      height: img.clientHeight || img.naturalHeight || pending.dims.height,
    };
    const point = displayToDevice(
      event.clientX - rect.left,
      event.clientY - rect.top,
      rendered.width,
      rendered.height,
      pending.dims,
    );
    void app.submit({ kind: "CLICK", x: point.x, y: point.y });
  });
  card.append(img);

  const controls = el("div", "controls");

  const approve = el("button", "approve", `approve ${pending.proposedAction}`);
  approve.addEventListener("click", () => {
    void app.submit(parseAction(pending.proposedAction));
  });
  controls.append(approve);

  const scrollRow = el("div", "row");
  for (const dir of SCROLL_DIRS) {
    const button = el("button", "scroll", `scroll ${dir.toLowerCase()}`);
    button.addEventListener("click", () => {
      void app.submit({ kind: "SCROLL", dir });
    });
    scrollRow.append(button);
  }
  controls.append(scrollRow);

  const typeRow = el("div", "row");
  const input = el("input") as HTMLInputElement;
  input.placeholder = "text to type";
  const typeButton = el("button", undefined, "type it");
  typeButton.addEventListener("click", () => {
    void app.submit({ kind: "TYPE", text: input.value });
  });
  typeRow.append(input, typeButton);
  controls.append(typeRow);

  const bareRow = el("div", "row");
  for (const kind of ["PRESS_BACK", "PRESS_HOME", "COMPLETE", "IMPOSSIBLE"] as const) {
    const button = el("button", "bare", kind.toLowerCase().replace("_", " "));
    button.addEventListener("click", () => {
      void app.submit({ kind });
    });
    bareRow.append(button);
  }
  controls.append(bareRow);

  const manualRow = el("div", "row");
  const manual = el("input", "manual") as HTMLInputElement;
  manual.placeholder = "raw action line (validated)";
  const send = el("button", undefined, "send") as HTMLButtonElement;
  const validate = () => {
    send.disabled = !isValidActionLine(manual.value);
  };
  manual.addEventListener("input", validate);
  validate();
  send.addEventListener("click", () => {
    if (isValidActionLine(manual.value)) {
      void app.submit(parseAction(manual.value));
    }
  });
  manualRow.append(manual, send);
  controls.append(manualRow);

  card.append(controls);
  root.append(card);
}

export function showToast(root: HTMLElement, message: string): void {
  const node = el("div", "toast", message);
  root.append(node);
  setTimeout(() => node.remove(), 4000);
}
