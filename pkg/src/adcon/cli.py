"""Scenario files and the command-line interface.

Scenarios are TOML documents with explicit keys::

    [leader]
    A  = [[0.0, 1.0], [-1.0, 0.0]]   # row-major
    C  = [1.0, 0.0]
    x0 = [1.0, -1.0]

    [graph]
    edges = [[0, 1, 1.0], [1, 2, 1.0]]   # from, to, weight; node 0 leads

    [design]
    mu = 12.8            # or "auto"

    [integration]
    h = 0.001
    T = 40.0
    stride = 10

    [[agents]]
    order      = 2
    regressors = [["x1^2"], ["sin(x2)"]]  # rows are stages, columns parameters
    theta      = [2.5]
    theta_hat0 = [1.2]
    x0         = [0.1, -0.2]
    eta0       = [[0.1, 0.2], [1.0, -1.5], [-1.0, -0.2]]
    gains      = [1.0, 1.0]
    mode       = "known"       # or "nussbaum", which also needs b = <nonzero>

Commands: ``simulate``, ``verify-gain``, ``graph-check``, ``paper-example``.
Exit codes: 0 success, 1 validation/synthesis failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import expr as ex
from .controller import AgentModel, ModelError
from .gain import AssumptionError, LeaderModel, SynthesisError
from .graph import DiGraph, GraphError, build_augmented_h, build_h, \
    has_spanning_tree, min_real_part
from .sim import AgentInit, IntegrationSettings, Scenario, ScenarioError, \
    metrics, run, write_csv, write_errors_csv

__all__ = [
    "ScenarioFileError",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "paper_scenario_path",
    "load_paper_scenario",
    "main",
]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class ScenarioFileError(ValueError):
    pass


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------

def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ScenarioFileError(f"missing key {key!r} in [{where}]")
    return table[key]


def _floats(value, where: str) -> list[float]:
    if not isinstance(value, list):
        raise ScenarioFileError(f"{where} must be a list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioFileError(f"{where} must contain numbers only")
        out.append(float(v))
    return out


def _matrix(value, where: str) -> list[list[float]]:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ScenarioFileError(f"{where} must be a list of rows")
    return [_floats(r, where) for r in value]


def scenario_from_dict(doc: dict) -> Scenario:
    leader_tbl = _require(doc, "leader", "scenario")
    leader = LeaderModel(
        A=np.array(_matrix(_require(leader_tbl, "A", "leader"), "leader.A")),
        C=np.array(_floats(_require(leader_tbl, "C", "leader"), "leader.C")),
        x0_init=np.array(_floats(_require(leader_tbl, "x0", "leader"), "leader.x0")),
    )

    agents_tbl = _require(doc, "agents", "scenario")
    if not isinstance(agents_tbl, list) or not agents_tbl:
        raise ScenarioFileError("at least one [[agents]] block is required")
    agents, inits = [], []
    for idx, tbl in enumerate(agents_tbl, start=1):
        where = f"agents[{idx}]"
        order = _require(tbl, "order", where)
        if not isinstance(order, int) or order < 1:
            raise ScenarioFileError(f"{where}.order must be a positive integer")
        sources = _require(tbl, "regressors", where)
        if not isinstance(sources, list) or len(sources) != order:
            raise ScenarioFileError(
                f"{where}.regressors must have one row per stage ({order})")
        rows = []
        for l, row in enumerate(sources, start=1):
            if not isinstance(row, list) or not row:
                raise ScenarioFileError(
                    f"{where}.regressors row {l} must be a non-empty list of strings")
            parsed = []
            for j, src in enumerate(row, start=1):
                try:
                    parsed.append(ex.parse(src, n_vars=l))
                except ex.ExprSyntaxError as err:
                    raise ScenarioFileError(
                        f"{where}.regressors stage {l}, entry {j}: {err}") from err
            rows.append(tuple(parsed))
        mode = tbl.get("mode", "known")
        b = tbl.get("b", 1.0 if mode == "known" else None)
        if b is None:
            raise ScenarioFileError(
                f"{where}: nussbaum mode requires the true input gain b")
        try:
            model = AgentModel(
                order=order, regressors=tuple(rows),
                theta=_floats(_require(tbl, "theta", where), f"{where}.theta"),
                gains=_floats(_require(tbl, "gains", where), f"{where}.gains"),
                mode=mode, b=float(b),
            )
        except ModelError as err:
            raise ScenarioFileError(f"{where}: {err}") from err
        # estimator starting points default to zero when omitted
        nu = leader.dim
        theta_hat0 = (_floats(tbl["theta_hat0"], f"{where}.theta_hat0")
                      if "theta_hat0" in tbl else [0.0] * model.n_params)
        eta0 = (np.array(_matrix(tbl["eta0"], f"{where}.eta0"))
                if "eta0" in tbl else np.zeros((order + 1, nu)))
        init = AgentInit(
            x0=_floats(_require(tbl, "x0", where), f"{where}.x0"),
            theta_hat0=theta_hat0,
            eta0=eta0,
            k0=float(tbl.get("k0", 0.0)),
        )
        agents.append(model)
        inits.append(init)

    graph_tbl = _require(doc, "graph", "scenario")
    edges = _require(graph_tbl, "edges", "graph")
    try:
        graph = DiGraph.from_edges(len(agents), [
            (int(e[0]), int(e[1]), float(e[2])) for e in edges])
    except (GraphError, ValueError, TypeError, IndexError) as err:
        raise ScenarioFileError(f"graph.edges: {err}") from err

    design_tbl = doc.get("design", {})
    mu_raw = design_tbl.get("mu", "auto")
    if isinstance(mu_raw, str):
        if mu_raw != "auto":
            raise ScenarioFileError('design.mu must be a number or "auto"')
        mu = None
    else:
        mu = float(mu_raw)

    integ_tbl = doc.get("integration", {})
    try:
        integration = IntegrationSettings(
            h=float(integ_tbl.get("h", 1e-3)),
            T=float(integ_tbl.get("T", 30.0)),
            stride=int(integ_tbl.get("stride", 10)),
        )
    except ScenarioError as err:
        raise ScenarioFileError(f"integration: {err}") from err

    return Scenario(leader=leader, agents=agents, inits=inits,
                    graph=graph, mu=mu, integration=integration)


def load_scenario(path) -> Scenario:
    """Parse, build, and fully validate a scenario file."""
    raw = Path(path).read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
        raise ScenarioFileError(f"{path}: {err}") from err
    scenario = scenario_from_dict(doc)
    try:
        scenario.validate()
        scenario.design()  # assumption + synthesis checks happen here
    except (ScenarioError, AssumptionError, SynthesisError, GraphError) as err:
        raise ScenarioFileError(f"{path}: {err}") from err
    return scenario


# --------------------------------------------------------------------------
# Saving
# --------------------------------------------------------------------------

def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)!r}")


def scenario_to_dict(scenario: Scenario) -> dict:
    edges = []
    w = scenario.graph.weights
    for i in range(1, w.shape[0]):
        for j in range(w.shape[1]):
            if w[i, j] > 0:
                edges.append([j, i, float(w[i, j])])
    doc = {
        "leader": {
            "A": [list(map(float, row)) for row in scenario.leader.A],
            "C": list(map(float, scenario.leader.C)),
            "x0": list(map(float, scenario.leader.x0_init)),
        },
        "graph": {"edges": edges},
        "design": {"mu": "auto" if scenario.mu is None else float(scenario.mu)},
        "integration": {
            "h": scenario.integration.h,
            "T": scenario.integration.T,
            "stride": scenario.integration.stride,
        },
        "agents": [],
    }
    for model, init in zip(scenario.agents, scenario.inits):
        entry = {
            "order": model.order,
            "regressors": [[ex.to_source(e) for e in row]
                           for row in model.regressors],
            "theta": list(map(float, model.theta)),
            "gains": list(map(float, model.gains)),
            "mode": model.mode,
            "x0": list(map(float, init.x0)),
            "theta_hat0": list(map(float, init.theta_hat0)),
            "eta0": [list(map(float, row)) for row in init.eta0],
        }
        if model.mode == "nussbaum":
            entry["b"] = float(model.b)
            entry["k0"] = float(init.k0)
        doc["agents"].append(entry)
    return doc


def save_scenario(scenario: Scenario, path) -> None:
    doc = scenario_to_dict(scenario)
    lines = []
    for section in ("leader", "graph", "design", "integration"):
        lines.append(f"[{section}]")
        for key, value in doc[section].items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    for entry in doc["agents"]:
        lines.append("[[agents]]")
        for key, value in entry.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def paper_scenario_path() -> Path:
    """The bundled five-agent benchmark scenario."""
    return Path(__file__).parent / "data" / "paper.scenario"


def load_paper_scenario() -> Scenario:
    return load_scenario(paper_scenario_path())


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _load_or_exit(path) -> Scenario:
    try:
        return load_scenario(path)
    except FileNotFoundError:
        print(f"error: cannot read {path}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except OSError as err:
        print(f"error: cannot read {path}: {err}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except ScenarioFileError as err:
        print(f"error: {err}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _print_metrics(m) -> None:
    print(f"escaped = {m.escaped}")
    if m.escape_time is not None:
        print(f"escape_time = {m.escape_time!r}")
    print(f"all_bounded = {m.all_bounded}")
    print(f"max_lyap_residual = {m.max_lyap_residual!r}")
    for i in range(len(m.final_error)):
        print(f"agent{i + 1}.bounded = {m.bounded[i]}")
        print(f"agent{i + 1}.final_error = {m.final_error[i]!r}")
        print(f"agent{i + 1}.peak_error = {m.peak_error[i]!r}")
        ttt = m.time_to_tolerance[i]
        print(f"agent{i + 1}.time_to_tolerance = "
              f"{'inf' if math.isinf(ttt) else repr(ttt)}")
        print(f"agent{i + 1}.sup_state = {m.sup_state[i]!r}")
        print(f"agent{i + 1}.sup_u = {m.sup_u[i]!r}")


def _cmd_simulate(args) -> int:
    scenario = _load_or_exit(args.scenario)
    log = run(scenario, h=args.h, T=args.T, stride=args.stride)
    if args.out:
        try:
            write_csv(log, args.out)
        except OSError as err:
            print(f"error: cannot write {args.out}: {err}", file=sys.stderr)
            return EXIT_IO
        print(f"wrote {args.out}")
    _print_metrics(metrics(log))
    return EXIT_OK


def _cmd_verify_gain(args) -> int:
    scenario = _load_or_exit(args.scenario)
    try:
        design = scenario.design()
    except (SynthesisError, AssumptionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    h_aug = build_augmented_h(scenario.graph, scenario.augmented_spec())
    for i, row in enumerate(np.asarray(design.P0)):
        print(f"P0.row{i + 1} = " + " ".join(repr(float(v)) for v in row))
    print(f"mu = {design.mu!r}")
    print(f"mu_min = {design.mu_min!r}")
    print("K = " + " ".join(repr(float(v)) for v in design.K))
    print(f"riccati_residual = {design.riccati_residual!r}")
    print(f"h_aug_min_real_part = {min_real_part(h_aug)!r}")
    print(f"spectral_abscissa = {design.spectral_abscissa!r}")
    return EXIT_OK


def _spectrum_text(m: np.ndarray) -> str:
    eigs = sorted(np.linalg.eigvals(m), key=lambda z: (z.real, z.imag))
    return " ".join(f"{float(z.real)!r}{float(z.imag):+}j" for z in eigs)


def _cmd_graph_check(args) -> int:
    scenario = _load_or_exit(args.scenario)
    g = scenario.graph
    h = build_h(g)
    h_aug = build_augmented_h(g, scenario.augmented_spec())
    ok = has_spanning_tree(g)
    print(f"agents = {g.n_agents}")
    print(f"leader_reaches_all = {ok}")
    print(f"h_spectrum = {_spectrum_text(h)}")
    print(f"h_aug_spectrum = {_spectrum_text(h_aug)}")
    print(f"h_min_real_part = {min_real_part(h)!r}")
    print(f"h_aug_min_real_part = {min_real_part(h_aug)!r}")
    print(f"h_aug_dimension = {h_aug.shape[0]}")
    if args.dump_haug:
        try:
            with open(args.dump_haug, "w", encoding="utf-8") as fh:
                for row in h_aug:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        except OSError as err:
            print(f"error: cannot write {args.dump_haug}: {err}", file=sys.stderr)
            return EXIT_IO
        print(f"wrote {args.dump_haug}")
    if not ok:
        print("error: the leader cannot reach every agent", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_paper_example(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"error: cannot create {out_dir}: {err}", file=sys.stderr)
        return EXIT_IO
    scenario = _load_or_exit(paper_scenario_path())
    log = run(scenario)
    trajectory = out_dir / "paper_example.csv"
    errors = out_dir / "paper_example_errors.csv"
    write_csv(log, trajectory)
    write_errors_csv(log, errors)
    print(f"wrote {trajectory}")
    print(f"wrote {errors}")
    _print_metrics(metrics(log))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adcon",
        description="Distributed adaptive output-consensus toolkit: gain "
                    "synthesis, graph checks, and closed-loop simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a scenario and write a CSV log")
    p.add_argument("scenario")
    p.add_argument("--h", type=float, default=None, help="step size override")
    p.add_argument("--T", type=float, default=None, help="horizon override")
    p.add_argument("--stride", type=int, default=None, help="log stride override")
    p.add_argument("--out", default=None, help="trajectory CSV path")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("verify-gain", help="print the synthesized observer gain")
    p.add_argument("scenario")
    p.set_defaults(fn=_cmd_verify_gain)

    p = sub.add_parser("graph-check", help="report reachability and spectra")
    p.add_argument("scenario")
    p.add_argument("--dump-haug", default=None,
                   help="write the augmented coupling matrix as CSV")
    p.set_defaults(fn=_cmd_graph_check)

    p = sub.add_parser("paper-example",
                       help="run the bundled five-agent benchmark")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=_cmd_paper_example)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_VALIDATION
    except (ScenarioError, ScenarioFileError, SynthesisError, AssumptionError,
            GraphError, ModelError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
