"""Operator entry points.

Exit codes: 0 ok, 2 validation, 3 backend, 4 environment, 5 internal.
Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click

from . import tsr
from .backends import backend_config_from_json, make_backend
from .codec import parse_action, serialize_action
from .controller import (
    BackendPolicy,
    EchoPolicy,
    EpisodeCaps,
    OracleSource,
    QueueSource,
    replay_static,
    run_episode,
)
from .core import EpisodeMode
from .env import BridgeClient, SimEnv, load_sim_app
from .errors import (
    BackendError,
    EnvironmentFailure,
    InterventionTimeout,
    StepgateError,
    UnknownInstruction,
    ValidationFailed,
)
from .metrics import eval_dataset, relative_efficiency, render_report_text, report_to_json, split_dataset
from .probing import ProbeCaps, probe_instruction, refine_trajectory
from .store import Dataset, load_instruction_pack

EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_ENVIRONMENT = 4
EXIT_INTERNAL = 5


def _fail(code: int, error: Exception) -> None:
    doc = {"error": type(error).__name__, "message": str(error)}
    click.echo(json.dumps(doc, sort_keys=True), err=True)
    sys.exit(code)


def wraps_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationFailed, UnknownInstruction, ZeroDivisionError) as exc:
            _fail(EXIT_VALIDATION, exc)
        except (BackendError, InterventionTimeout) as exc:
            _fail(EXIT_BACKEND, exc)
        except EnvironmentFailure as exc:
            _fail(EXIT_ENVIRONMENT, exc)
        except StepgateError as exc:
            _fail(EXIT_INTERNAL, exc)

    return wrapper


@click.group()
def main() -> None:
    """Confidence-gated GUI-agent orchestration."""


def _load_env(config_path: Path):
    doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    kind = doc.get("kind", "sim")
    if kind == "sim":
        app = load_sim_app(Path(config_path).parent / doc["app"])
        return SimEnv(app)
    if kind == "device":
        import socket

        sock = socket.create_connection((doc["host"], int(doc["port"])))
        stream = sock.makefile("rwb")
        return BridgeClient(stream, stream)
    raise ValidationFailed(f"unknown env kind {kind!r}")


@main.command()
@click.option("--instructions", "instructions_path", required=True, type=click.Path(exists=True))
@click.option("--agent", "agent_cfg", required=True, type=click.Path(exists=True))
@click.option("--critic", "critic_cfg", required=True, type=click.Path(exists=True))
@click.option("--env", "env_cfg", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--max-steps", default=10, show_default=True)
@click.option("--max-retries", default=3, show_default=True)
@wraps_errors
def probe(instructions_path, agent_cfg, critic_cfg, env_cfg, out_dir, max_steps, max_retries):
    """Probe every instruction and store the refined trajectories."""
    instructions = load_instruction_pack(Path(instructions_path))
    agent = make_backend(backend_config_from_json(Path(agent_cfg)))
    critic = make_backend(backend_config_from_json(Path(critic_cfg)))
    env = _load_env(Path(env_cfg))
    caps = ProbeCaps(max_steps=max_steps, max_retries_per_plan_item=max_retries)
    dataset = Dataset.open_or_create(Path(out_dir))

    saved, rejected, aborted = 0, 0, 0
    for instruction in instructions:
        result = probe_instruction(instruction, agent, critic, env, caps)
        if result.aborted:
            aborted += 1
            click.echo(
                json.dumps({"instruction": instruction.id, "aborted": result.abort_reason}),
                err=True,
            )
            continue
        refined = refine_trajectory(result.trajectory)
        if refined.rejected or refined.trajectory is None:
            rejected += 1
            click.echo(
                json.dumps({"instruction": instruction.id, "rejected": list(refined.reasons)}),
                err=True,
            )
            continue
        dataset.save_trajectory(refined.trajectory)
        saved += 1
    click.echo(json.dumps({"saved": saved, "rejected": rejected, "aborted": aborted}))


def _policy_from_config(path: Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind", "").lower() == "echo":
        return EchoPolicy(score=int(doc.get("score", 5)))
    config = backend_config_from_json(
        {**doc, "script_path": str(Path(path).parent / doc["script_path"])}
        if doc.get("script_path")
        else doc
    )
    return BackendPolicy(make_backend(config))


@main.command("eval")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--policy", "policy_cfg", required=True, type=click.Path(exists=True))
@click.option("--gamma", default=4.0, show_default=True)
@click.option("--no-substitute", is_flag=True, help="Do not credit ground truth on gated steps.")
@click.option("--split", "split_side", type=click.Choice(["all", "train", "test"]), default="all")
@click.option("--json-out", type=click.Path(), default=None)
@wraps_errors
def eval_cmd(dataset_dir, policy_cfg, gamma, no_substitute, split_side, json_out):
    """Replay a recorded dataset against a policy and report the metrics."""
    dataset = Dataset(Path(dataset_dir))
    pairs = list(dataset.iter_trajectories())
    if split_side != "all":
        split = dataset.manifest.split
        if not split:
            raise ValidationFailed("dataset has no recorded split; run `stepgate split` first")
        wanted = set(split["train_ids" if split_side == "train" else "test_ids"])
        pairs = [(tid, traj) for tid, traj in pairs if tid in wanted]
    trajectories = [traj for _, traj in pairs]
    policy = _policy_from_config(Path(policy_cfg))
    records = replay_static(
        trajectories, policy, gamma, substitute_ground_truth=not no_substitute
    )
    report = eval_dataset(records, gamma=gamma)
    click.echo(render_report_text(report))
    if json_out:
        Path(json_out).write_text(report_to_json(report) + "\n", encoding="utf-8")


@main.command()
@click.option("--instruction", "instruction_id", required=True)
@click.option("--instructions", "instructions_path", required=True, type=click.Path(exists=True))
@click.option("--policy", "policy_cfg", required=True, type=click.Path(exists=True))
@click.option("--env", "env_cfg", required=True, type=click.Path(exists=True))
@click.option("--gamma", default=4.0, show_default=True)
@click.option("--mode", type=click.Choice(["autonomous", "adaptive", "interactive"]), default="adaptive")
@click.option("--intervene", type=click.Choice(["oracle", "ground-truth", "console"]), default="oracle")
@click.option("--oracle-script", type=click.Path(exists=True), default=None)
@click.option("--ground-truth-dataset", type=click.Path(exists=True), default=None)
@click.option("--service-url", default="http://127.0.0.1:8000")
@click.option("--max-steps", default=10, show_default=True)
@wraps_errors
def run(instruction_id, instructions_path, policy_cfg, env_cfg, gamma, mode, intervene,
        oracle_script, ground_truth_dataset, service_url, max_steps):
    """Run one live confidence-gated episode."""
    if intervene == "console":
        _run_via_service(service_url, instruction_id, gamma, mode)
        return

    instructions = {i.id: i for i in load_instruction_pack(Path(instructions_path))}
    instruction = instructions.get(instruction_id)
    if instruction is None:
        raise UnknownInstruction(f"{instruction_id!r} not in {instructions_path}")
    backend = make_backend(backend_config_from_json(Path(policy_cfg)))
    env = _load_env(Path(env_cfg))

    if intervene == "ground-truth":
        if not ground_truth_dataset:
            raise ValidationFailed("--intervene ground-truth requires --ground-truth-dataset")
        from .controller import InterventionSourceKind

        dataset = Dataset(Path(ground_truth_dataset))
        by_step = {}
        for _, traj in dataset.iter_trajectories():
            if traj.instruction.id == instruction_id:
                by_step = {s.index: s.executed_action for s in traj.steps}
                break
        if not by_step:
            raise ValidationFailed(f"no recorded trajectory for {instruction_id!r}")
        source = OracleSource(
            lambda req: by_step[req.step_index], kind=InterventionSourceKind.GROUND_TRUTH
        )
    else:
        if not oracle_script:
            raise ValidationFailed("--intervene oracle requires --oracle-script")
        actions = [
            parse_action(line)
            for line in Path(oracle_script).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        source = QueueSource(actions)

    result = run_episode(
        instruction=instruction,
        policy_backend=backend,
        env=env,
        gamma=gamma,
        intervention_source=source,
        caps=EpisodeCaps(max_steps=max_steps),
        mode=EpisodeMode(mode.upper()),
    )
    click.echo(
        json.dumps(
            {
                "status": result.status.value,
                "steps": [
                    {
                        "index": s.index,
                        "proposed": serialize_action(s.proposed_action),
                        "confidence": s.confidence,
                        "executed": serialize_action(s.executed_action),
                        "intervened": s.intervened,
                    }
                    for s in result.steps
                ],
                "interventions": result.interventions,
                "autonomous_steps": result.autonomous_steps,
            },
            indent=2,
        )
    )


def _run_via_service(service_url: str, instruction_id: str, gamma: float, mode: str) -> None:
    import requests

    response = requests.post(
        f"{service_url}/episodes",
        json={
            "instruction_id": instruction_id,
            "mode": mode.upper(),
            "gamma": gamma,
            "env": "sim",
            "policy_backend": "policy",
        },
        timeout=30,
    )
    if response.status_code != 202:
        raise ValidationFailed(f"service refused episode: {response.status_code} {response.text}")
    episode_id = response.json()["episode_id"]
    click.echo(json.dumps({"episode_id": episode_id, "console": f"{service_url}/?episode={episode_id}"}))
    while True:
        snap = requests.get(f"{service_url}/episodes/{episode_id}", timeout=30).json()
        if snap["status"] not in ("RUNNING", "AWAITING_INTERVENTION"):
            click.echo(json.dumps(snap, indent=2))
            return
        time.sleep(0.5)


@main.command()
@click.option("--u", "u", required=True, type=float)
@click.option("--l", "l", required=True, type=float)
@click.option("--k", "k", required=True, type=int)
@click.option("--n", "n_traj", default=1, show_default=True, type=int)
@click.option("--trials", default=1000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--csv", "csv_out", type=click.Path(), default=None,
              help="Write the 100-bin histogram of task success rates as CSV.")
@wraps_errors
def simulate(u, l, k, n_traj, trials, seed, csv_out):
    """Monte Carlo simulation of task success under Beta-distributed steps."""
    params = tsr.BetaParams(u=u, l=l)
    summary = tsr.simulate_tsr_mc(params, k=k, n_traj=n_traj, trials=trials, seed=seed)
    analytic = tsr.lognormal_tsr(params, k)
    mu, sigma2 = tsr.beta_log_moments(params)
    doc = {
        "backend": summary.backend,
        "params": {"u": u, "l": l, "k": k, "n_traj": n_traj, "trials": trials, "seed": seed},
        "log_moments": {"mu": mu, "sigma2": sigma2},
        "analytic": {
            "log_mean": analytic.log_mean,
            "log_var": analytic.log_var,
            "mean": analytic.mean,
            "var": analytic.var,
            "exact_mean": params.mean ** k,
        },
        "tsr": {
            "count": summary.tsr.count,
            "mean": summary.tsr.mean,
            "var": summary.tsr.var,
            "std_err": summary.tsr.std_err,
            "quantiles": summary.tsr.quantiles,
        },
        "tsr_avg": {
            "count": summary.tsr_avg.count,
            "mean": summary.tsr_avg.mean,
            "var": summary.tsr_avg.var,
        },
    }
    click.echo(json.dumps(doc, indent=2, sort_keys=True))
    if csv_out:
        lines = ["bin_low,bin_high,count"]
        width = 1.0 / tsr.HISTOGRAM_BINS
        for i, count in enumerate(summary.tsr.histogram):
            lines.append(f"{i * width:.4f},{(i + 1) * width:.4f},{count}")
        Path(csv_out).write_text("\n".join(lines) + "\n", encoding="utf-8")


@main.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--ratio", default=0.8, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@wraps_errors
def split(dataset_dir, ratio, seed):
    """Split a dataset into train/test by whole trajectory; record it."""
    dataset = Dataset(Path(dataset_dir))
    ids = [tid for tid, _ in dataset.iter_trajectories()]
    train_ids, test_ids = split_dataset(ids, ratio=ratio, seed=seed)
    dataset.set_split(train_ids, test_ids, seed)
    click.echo(json.dumps({"train": len(train_ids), "test": len(test_ids), "seed": seed}))


@main.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@wraps_errors
def stats(dataset_dir):
    """Recount a dataset and print its statistics."""
    dataset = Dataset(Path(dataset_dir))
    counts = dataset.stats()
    manifest = dataset.manifest
    click.echo(
        json.dumps(
            {"name": manifest.name, "counts": counts, "split": manifest.split},
            indent=2,
            sort_keys=True,
        )
    )


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@wraps_errors
def serve(port, host, config_path):
    """Host the episode service (HTTP + WebSocket)."""
    import uvicorn

    from .service import create_app, load_service_config

    app = create_app(load_service_config(Path(config_path)))
    uvicorn.run(app, host=host, port=port)


@main.command("re")
@click.option("--human-steps", required=True, type=int)
@click.option("--actual-steps", required=True, type=int)
@wraps_errors
def re_cmd(human_steps, actual_steps):
    """Relative efficiency: human-optimal steps over actual steps."""
    value = relative_efficiency(human_steps, actual_steps)
    click.echo(json.dumps({"re": value, "re_percent": round(100.0 * value, 2)}))


if __name__ == "__main__":
    main()
