import { describe, expect, it } from "vitest";

import {
  isValidActionLine,
  MalformedActionError,
  parseAction,
  serializeAction,
  type Action,
} from "../src/actions.js";

describe("serializeAction", () => {
  it("emits the exact surface forms", () => {
    expect(serializeAction({ kind: "CLICK", x: 616, y: 371 })).toBe("CLICK <616, 371>");
    expect(serializeAction({ kind: "SCROLL", dir: "UP" })).toBe("SCROLL [UP]");
    expect(serializeAction({ kind: "TYPE", text: "milk" })).toBe("TYPE [milk]");
    expect(serializeAction({ kind: "PRESS_HOME" })).toBe("PRESS_HOME");
    expect(serializeAction({ kind: "COMPLETE" })).toBe("COMPLETE");
  });
});

describe("parseAction", () => {
  it("round-trips every kind", () => {
    const samples: Action[] = [
      { kind: "CLICK", x: 146, y: 357 },
      { kind: "SCROLL", dir: "LEFT" },
      { kind: "TYPE", text: " Milk " },
      { kind: "PRESS_BACK" },
      { kind: "PRESS_HOME" },
      { kind: "COMPLETE" },
      { kind: "IMPOSSIBLE" },
    ];
    for (const action of samples) {
      expect(parseAction(serializeAction(action))).toEqual(action);
    }
  });

  it("tolerates whitespace and verb case", () => {
    expect(parseAction("  click <1,2>  ")).toEqual({ kind: "CLICK", x: 1, y: 2 });
    expect(parseAction("scroll [down]")).toEqual({ kind: "SCROLL", dir: "DOWN" });
  });

  it("rejects anything outside the seven kinds", () => {
    for (const bad of ["SWIPE <1, 2>", "CLICK <a, b>", "CLICK <1>", "SCROLL [DIAG]", "", "do it"]) {
      expect(() => parseAction(bad)).toThrow(MalformedActionError);
    }
  });

  it("rejects multi-line TYPE text", () => {
    expect(() => parseAction("TYPE [a\nb]")).toThrow(MalformedActionError);
  });
});

describe("isValidActionLine", () => {
  it("gates manual entry with the same grammar", () => {
    expect(isValidActionLine("CLICK <10, 20>")).toBe(true);
    expect(isValidActionLine("TYPE [coffee beans]")).toBe(true);
    expect(isValidActionLine("CLICK <10>")).toBe(false);
    expect(isValidActionLine("open the app")).toBe(false);
  });
});
