/**
 * The device action grammar shared with the episode service.
 *
 * Every submission the console makes round-trips through serializeAction,
 * so nothing outside the seven kinds can ever reach the wire.
 */

export type ScrollDir = "UP" | "DOWN" | "LEFT" | "RIGHT";

export type Action =
  | { kind: "CLICK"; x: number; y: number }
  | { kind: "SCROLL"; dir: ScrollDir }
  | { kind: "TYPE"; text: string }
  | { kind: "PRESS_BACK" }
  | { kind: "PRESS_HOME" }
  | { kind: "COMPLETE" }
  | { kind: "IMPOSSIBLE" };

export const SCROLL_DIRS: readonly ScrollDir[] = ["UP", "DOWN", "LEFT", "RIGHT"];
const BARE_VERBS = ["PRESS_BACK", "PRESS_HOME", "COMPLETE", "IMPOSSIBLE"] as const;

export class MalformedActionError extends Error {}

export function serializeAction(action: Action): string {
  switch (action.kind) {
    case "CLICK":
      return `CLICK <${action.x}, ${action.y}>`;
    case "SCROLL":
      return `SCROLL [${action.dir}]`;
    case "TYPE":
      return `TYPE [${action.text}]`;
    default:
      return action.kind;
  }
}

const CLICK_RE = /^CLICK\s*<\s*(\d+)\s*,\s*(\d+)\s*>$/i;
const SCROLL_RE = /^SCROLL\s*\[\s*(\w+)\s*\]$/i;
const TYPE_RE = /^TYPE\s*\[([\s\S]*)\]$/i;

/** Parse one action line; throws MalformedActionError on anything else. */
export function parseAction(line: string): Action {
  const text = line.trim();
  const click = CLICK_RE.exec(text);
  if (click) {
    return { kind: "CLICK", x: Number(click[1]), y: Number(click[2]) };
  }
  const scroll = SCROLL_RE.exec(text);
  if (scroll) {
    const dir = scroll[1]!.toUpperCase();
    if (!SCROLL_DIRS.includes(dir as ScrollDir)) {
      throw new MalformedActionError(`unknown scroll direction: ${scroll[1]}`);
    }
    return { kind: "SCROLL", dir: dir as ScrollDir };
  }
  const typed = TYPE_RE.exec(text);
  if (typed) {
    // anything line-breaking would corrupt the line-oriented wire format
    if (/[\n\r\v\f\x1c\x1d\x1e\x85\u2028\u2029]/.test(typed[1]!)) {
      throw new MalformedActionError("TYPE text must be a single line");
    }
    return { kind: "TYPE", text: typed[1]! };
  }
  const verb = text.toUpperCase();
  if ((BARE_VERBS as readonly string[]).includes(verb)) {
    return { kind: verb as (typeof BARE_VERBS)[number] };
  }
  throw new MalformedActionError(`not a valid action line: ${line}`);
}

/** True iff the line parses in the grammar (used to block manual entry). */
export function isValidActionLine(line: string): boolean {
  try {
    parseAction(line);
    return true;
  } catch {
    return false;
  }
}
