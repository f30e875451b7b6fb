#!/usr/bin/env python3
"""Regenerate the bundled demo pack under src/stepgate/data/demo/.

Produces the mock shop/notes sim app (screens as tiny generated PNGs with
clickable regions drawn in), the 10-instruction pack, deterministic agent/
critic/policy scripts, backend and env configs, the service config, and the
probed golden dataset. Run from the repo root after changing any of the
definitions below; outputs are committed.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import struct
import sys
import zlib
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from stepgate.backends import ScriptedBackend  # noqa: E402
from stepgate.core import Instruction, Language, Scenario  # noqa: E402
from stepgate.env import SimEnv, load_sim_app  # noqa: E402
from stepgate.probing import ProbeCaps, probe_instruction, refine_trajectory  # noqa: E402
from stepgate.store import Dataset, save_instruction_pack  # noqa: E402

DEMO = REPO / "src" / "stepgate" / "data" / "demo"
DIMS = (1080, 2400)
SCALE = 4  # screen PNGs rendered at 1/SCALE of device resolution


# ---------------------------------------------------------------------------
# Minimal PNG writer (solid background + outlined boxes for tappable regions)
# ---------------------------------------------------------------------------

def _chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(
        ">I", zlib.crc32(tag + data) & 0xFFFFFFFF
    )


def write_screen_png(path: Path, screen_id: str, boxes: list[tuple[int, int, int, int]]) -> None:
    width, height = DIMS[0] // SCALE, DIMS[1] // SCALE
    digest = hashlib.sha256(screen_id.encode()).digest()
    bg = (40 + digest[0] % 120, 40 + digest[1] % 120, 40 + digest[2] % 120)
    pixels = bytearray(bytes(bg) * (width * height))

    def put(x: int, y: int, color: tuple[int, int, int]) -> None:
        if 0 <= x < width and 0 <= y < height:
            offset = (y * width + x) * 3
            pixels[offset:offset + 3] = bytes(color)

    for x1, y1, x2, y2 in boxes:
        x1, y1, x2, y2 = x1 // SCALE, y1 // SCALE, x2 // SCALE, y2 // SCALE
        fill = (min(bg[0] + 70, 255), min(bg[1] + 70, 255), min(bg[2] + 70, 255))
        for y in range(y1, y2 + 1):
            for x in range(x1, x2 + 1):
                put(x, y, fill)
        for x in range(x1, x2 + 1):
            put(x, y1, (250, 250, 250))
            put(x, y2, (250, 250, 250))
        for y in range(y1, y2 + 1):
            put(x1, y, (250, 250, 250))
            put(x2, y, (250, 250, 250))

    raw = b"".join(
        b"\x00" + bytes(pixels[row * width * 3:(row + 1) * width * 3])
        for row in range(height)
    )
    png = (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0))
        + _chunk(b"IDAT", zlib.compress(raw, 9))
        + _chunk(b"IEND", b"")
    )
    path.write_bytes(png)


# ---------------------------------------------------------------------------
# Sim app definition
# ---------------------------------------------------------------------------

BOXES = {
    "shop_icon": [536, 291, 696, 451],       # center (616, 371)
    "notes_icon": [200, 291, 360, 451],      # center (280, 371)
    "search_bar": [140, 220, 940, 340],      # center (540, 280)
    "cart_icon": [900, 120, 1060, 220],      # center (980, 170)
    "settings_icon": [60, 120, 220, 220],    # center (140, 170)
    "filter_button": [66, 307, 226, 407],    # center (146, 357)
    "first_result": [140, 600, 940, 900],    # center (540, 750)
    "add_to_cart": [140, 2100, 940, 2260],   # center (540, 2180)
    "language_row": [140, 800, 940, 920],    # center (540, 860)
    "english_option": [140, 1000, 940, 1100],  # center (540, 1050)
    "new_note_fab": [880, 2160, 1020, 2300],   # center (950, 2230)
    "save_note": [900, 120, 1060, 220],      # center (980, 170)
}

SCREENS: dict[str, list[dict]] = {
    "launcher": [
        {"action": "CLICK <616, 371>", "box": BOXES["shop_icon"], "to": "shop_home"},
        {"action": "CLICK <280, 371>", "box": BOXES["notes_icon"], "to": "notes_home"},
    ],
    "shop_home": [
        {"action": "CLICK <540, 280>", "box": BOXES["search_bar"], "to": "shop_search"},
        {"action": "CLICK <980, 170>", "box": BOXES["cart_icon"], "to": "shop_cart"},
        {"action": "CLICK <140, 170>", "box": BOXES["settings_icon"], "to": "shop_settings"},
    ],
    "shop_search": [
        {"action": "TYPE [milk]", "to": "shop_results_milk"},
        {"action": "TYPE [coffee beans]", "to": "shop_results_coffee"},
        {"action": "PRESS_BACK", "to": "shop_home"},
    ],
    "shop_results_milk": [
        {"action": "CLICK <146, 357>", "box": BOXES["filter_button"], "to": "shop_results_milk_filtered"},
        {"action": "CLICK <540, 750>", "box": BOXES["first_result"], "to": "shop_product_milk"},
        {"action": "SCROLL [DOWN]", "to": "shop_results_milk_page2"},
        {"action": "PRESS_BACK", "to": "shop_search"},
    ],
    "shop_results_milk_filtered": [
        {"action": "CLICK <540, 750>", "box": BOXES["first_result"], "to": "shop_product_milk"},
    ],
    "shop_results_milk_page2": [
        {"action": "SCROLL [UP]", "to": "shop_results_milk"},
    ],
    "shop_results_coffee": [
        {"action": "CLICK <540, 750>", "box": BOXES["first_result"], "to": "shop_product_coffee"},
    ],
    "shop_product_milk": [
        {"action": "CLICK <540, 2180>", "box": BOXES["add_to_cart"], "to": "shop_cart_added"},
        {"action": "PRESS_BACK", "to": "shop_results_milk"},
    ],
    "shop_product_coffee": [
        {"action": "CLICK <540, 2180>", "box": BOXES["add_to_cart"], "to": "shop_cart_added"},
    ],
    "shop_cart": [
        {"action": "PRESS_BACK", "to": "shop_home"},
    ],
    "shop_cart_added": [
        {"action": "PRESS_BACK", "to": "shop_home"},
    ],
    "shop_settings": [
        {"action": "CLICK <540, 860>", "box": BOXES["language_row"], "to": "shop_settings_language"},
        {"action": "PRESS_BACK", "to": "shop_home"},
    ],
    "shop_settings_language": [
        {"action": "CLICK <540, 1050>", "box": BOXES["english_option"], "to": "shop_settings_language_en"},
    ],
    "shop_settings_language_en": [],
    "notes_home": [
        {"action": "CLICK <950, 2230>", "box": BOXES["new_note_fab"], "to": "notes_edit"},
    ],
    "notes_edit": [
        {"action": "TYPE [buy milk tomorrow]", "to": "notes_edit_filled"},
    ],
    "notes_edit_filled": [
        {"action": "CLICK <980, 170>", "box": BOXES["save_note"], "to": "notes_saved"},
    ],
    "notes_saved": [],
}

GOALS = {
    "demo-01": {"screen": "shop_home", "typed": []},
    "demo-02": {"screen": "shop_results_milk", "typed": ["milk"]},
    "demo-03": {"screen": "shop_results_milk_filtered", "typed": ["milk"]},
    "demo-04": {"screen": "shop_cart_added", "typed": ["milk"]},
    "demo-05": {"screen": "shop_cart", "typed": []},
    "demo-06": {"screen": "shop_results_coffee", "typed": ["coffee beans"]},
    "demo-07": {"screen": "shop_product_coffee", "typed": ["coffee beans"]},
    "demo-08": {"screen": "shop_settings", "typed": []},
    "demo-09": {"screen": "notes_saved", "typed": ["buy milk tomorrow"]},
    "demo-10": {"screen": "shop_results_milk_page2", "typed": ["milk"]},
}

INSTRUCTIONS = [
    ("demo-01", "Open the shop app.", "shopmock", "shopping", "NORMAL"),
    ("demo-02", "Search the shop for milk.", "shopmock", "shopping", "NORMAL"),
    ("demo-03", "Search for milk in the shop and apply the price filter.",
     "shopmock", "shopping", "INTERRUPTION"),
    ("demo-04", "Add a carton of milk to the shopping cart.", "shopmock", "shopping", "NORMAL"),
    ("demo-05", "Open the shopping cart in the shop app.", "shopmock", "shopping", "NORMAL"),
    ("demo-06", "Search the shop for coffee beans.", "shopmock", "shopping", "NORMAL"),
    ("demo-07", "Open the product page for coffee beans.", "shopmock", "shopping", "NORMAL"),
    ("demo-08", "Open the shop app settings.", "shopmock", "settings", "NORMAL"),
    ("demo-09", "Write a note saying buy milk tomorrow.", "notemock", "productivity", "NORMAL"),
    ("demo-10", "Scroll down the milk search results.", "shopmock", "shopping", "NORMAL"),
]

# Golden executed action per step; the final step is always COMPLETE.
GOLDEN: dict[str, list[str]] = {
    "demo-01": ["CLICK <616, 371>", "COMPLETE"],
    "demo-02": ["CLICK <616, 371>", "CLICK <540, 280>", "TYPE [milk]", "COMPLETE"],
    "demo-03": ["CLICK <616, 371>", "CLICK <540, 280>", "TYPE [milk]",
                "CLICK <146, 357>", "COMPLETE"],
    "demo-04": ["CLICK <616, 371>", "CLICK <540, 280>", "TYPE [milk]",
                "CLICK <540, 750>", "CLICK <540, 2180>", "COMPLETE"],
    "demo-05": ["CLICK <616, 371>", "CLICK <980, 170>", "COMPLETE"],
    "demo-06": ["CLICK <616, 371>", "CLICK <540, 280>", "TYPE [coffee beans]", "COMPLETE"],
    "demo-07": ["CLICK <616, 371>", "CLICK <540, 280>", "TYPE [coffee beans]",
                "CLICK <540, 750>", "COMPLETE"],
    "demo-08": ["CLICK <616, 371>", "CLICK <140, 170>", "COMPLETE"],
    "demo-09": ["CLICK <280, 371>", "CLICK <950, 2230>", "TYPE [buy milk tomorrow]",
                "CLICK <980, 170>", "COMPLETE"],
    "demo-10": ["CLICK <616, 371>", "CLICK <540, 280>", "TYPE [milk]",
                "SCROLL [DOWN]", "COMPLETE"],
}

PLANS: dict[str, list[str]] = {
    "demo-01": ["Open the shop app from the launcher"],
    "demo-02": ["Open the shop app", "Tap the search bar", "Type milk into the search field"],
    "demo-03": ["Open the shop app", "Tap the search bar",
                "Type milk into the search field", "Apply the price filter"],
    "demo-04": ["Open the shop app", "Tap the search bar", "Type milk into the search field",
                "Open the first result", "Tap add to cart"],
    "demo-05": ["Open the shop app", "Open the shopping cart"],
    "demo-06": ["Open the shop app", "Tap the search bar",
                "Type coffee beans into the search field"],
    "demo-07": ["Open the shop app", "Tap the search bar",
                "Type coffee beans into the search field", "Open the first result"],
    "demo-08": ["Open the shop app", "Open the settings screen"],
    "demo-09": ["Open the notes app", "Start a new note",
                "Type the note text", "Save the note"],
    "demo-10": ["Open the shop app", "Tap the search bar",
                "Type milk into the search field", "Scroll down the results"],
}

# The seeded complex step: the probed agent goes wrong once in demo-03.
AGENT_OVERRIDES: dict[tuple[str, int], str] = {
    ("demo-03", 3): "SCROLL [UP]",
}

# Policy script for episode demos: golden path with varying confidence.
POLICY_SCORES: dict[str, list[int]] = {
    "demo-03": [5, 5, 4, 2, 5],
}


def build_scripts() -> tuple[list[str], list[str]]:
    agent_replies: list[str] = []
    critic_replies: list[str] = []
    for iid, *_ in INSTRUCTIONS:
        golden = GOLDEN[iid]
        plan = PLANS[iid]
        critic_replies.append("\n".join(f"{i + 1}. {item}" for i, item in enumerate(plan)))
        for t, action in enumerate(golden):
            proposed = AGENT_OVERRIDES.get((iid, t), action)
            agent_replies.append(proposed)
            critic_replies.append(action)                      # supervisory action
            critic_replies.append("5" if proposed == action else "2")  # score
            critic_replies.append(str(min(t + 1, len(plan))))  # phase after executing
            critic_replies.append("yes" if t == len(golden) - 1 else "no")
    return agent_replies, critic_replies


def write_script(path: Path, replies: list[str]) -> None:
    path.write_text("\n---\n".join(replies) + "\n", encoding="utf-8")


def main() -> None:
    if DEMO.exists():
        shutil.rmtree(DEMO)
    (DEMO / "screens").mkdir(parents=True)
    (DEMO / "scripts").mkdir(parents=True)

    # screens
    for sid, transitions in SCREENS.items():
        boxes = [tuple(t["box"]) for t in transitions if "box" in t]
        write_screen_png(DEMO / "screens" / f"{sid}.png", sid, boxes)

    # sim app
    app_doc = {
        "name": "shopmock",
        "dims": {"width": DIMS[0], "height": DIMS[1]},
        "initial": "launcher",
        "screens": {
            sid: {
                "payload": f"screens/{sid}.png",
                "transitions": transitions,
            }
            for sid, transitions in SCREENS.items()
        },
        "goals": GOALS,
    }
    (DEMO / "simapp.json").write_text(json.dumps(app_doc, indent=2) + "\n", encoding="utf-8")

    # instruction pack
    instructions = [
        Instruction(id=iid, text=text, language=Language.EN, app=app,
                    topic=topic, scenario=Scenario(scenario))
        for iid, text, app, topic, scenario in INSTRUCTIONS
    ]
    save_instruction_pack(instructions, DEMO / "instructions.json")

    # scripts
    agent_replies, critic_replies = build_scripts()
    write_script(DEMO / "scripts" / "agent.txt", agent_replies)
    write_script(DEMO / "scripts" / "critic.txt", critic_replies)
    policy_replies = [
        f"ACTION: {action}\nSCORE: {score}"
        for action, score in zip(GOLDEN["demo-03"], POLICY_SCORES["demo-03"])
    ]
    write_script(DEMO / "scripts" / "policy.txt", policy_replies)

    # configs
    (DEMO / "agent.json").write_text(json.dumps(
        {"kind": "SCRIPTED", "script_path": "scripts/agent.txt"}, indent=2) + "\n")
    (DEMO / "critic.json").write_text(json.dumps(
        {"kind": "SCRIPTED", "script_path": "scripts/critic.txt"}, indent=2) + "\n")
    (DEMO / "policy.json").write_text(json.dumps(
        {"kind": "SCRIPTED", "script_path": "scripts/policy.txt"}, indent=2) + "\n")
    (DEMO / "echo_policy.json").write_text(json.dumps({"kind": "echo"}, indent=2) + "\n")
    (DEMO / "env.json").write_text(json.dumps(
        {"kind": "sim", "app": "simapp.json"}, indent=2) + "\n")
    (DEMO / "service.json").write_text(json.dumps(
        {
            "instructions": "instructions.json",
            "sim_app": "simapp.json",
            "backends": {"policy": {"kind": "SCRIPTED", "script_path": "scripts/policy.txt"}},
            "gamma": 4,
            "max_steps": 10,
            "intervention_timeout": 300,
        },
        indent=2,
    ) + "\n")

    # probed golden dataset
    app = load_sim_app(DEMO / "simapp.json")
    agent = ScriptedBackend.from_file(DEMO / "scripts" / "agent.txt")
    critic = ScriptedBackend.from_file(DEMO / "scripts" / "critic.txt")
    dataset = Dataset.create(DEMO / "dataset", name="demo")
    score_below_5 = []
    for instruction in instructions:
        env = SimEnv(app)
        result = probe_instruction(instruction, agent, critic, env, ProbeCaps())
        assert not result.aborted, (instruction.id, result.abort_reason)
        assert result.trajectory.finished, instruction.id
        refined = refine_trajectory(result.trajectory)
        assert refined.trajectory is not None, (instruction.id, refined.reasons)
        for step in refined.trajectory.steps:
            if step.score < 5:
                score_below_5.append((instruction.id, step.index))
        dataset.save_trajectory(refined.trajectory)

    stats = dataset.stats()
    assert stats == {"trajectories": 10, "screens": 42, "goals": 10}, stats
    assert score_below_5 == [("demo-03", 3)], score_below_5
    assert agent.remaining == 0, agent.remaining
    assert critic.remaining == 0, critic.remaining
    print("demo pack built:", stats)


if __name__ == "__main__":
    main()
