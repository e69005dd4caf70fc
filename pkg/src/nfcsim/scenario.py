"""Scenario files: YAML schema, validation, manifests, CSV emission.

A scenario file declares the topology (explicit or generated), the
application, and its parameters. Validation is strict: unknown keys are
rejected, and every diagnostic carries the offending line. A run
manifest is the fully resolved scenario (defaults filled in, overrides
applied) plus the tool version; replaying a manifest reproduces the run
byte for byte.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import yaml

import nfcsim
from nfcsim.engine import (
    APPLICATIONS,
    DataModel,
    EtaSchedule,
    NeuralParams,
    Scenario,
    ScenarioResult,
)
from nfcsim.field import FieldSpec
from nfcsim.graph import (
    NodeRole,
    TopologyConfig,
    balanced_tree_topology,
    chain_topology,
    star_topology,
    validate_config,
)
from nfcsim.learning.neural import FailureModel
from nfcsim.solvability import TARGET_PRESETS

SCHEMA_VERSION = 1

_ROLES = {role.value: role for role in NodeRole}


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    path: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.path}: {self.message}"


@dataclass(frozen=True)
class CapacityRequest:
    """Solvability sweep parameters for the capacity command."""

    target: str
    alphabet: int = 2
    k_values: tuple[int, ...] = (1,)
    l_values: tuple[int, ...] = (1,)
    cap: int = 10_000_000
    function_class: str = "all"


@dataclass
class LoadedScenario:
    """Parse/validation outcome: resolved echo, built values, diagnostics."""

    resolved: dict
    scenario: Scenario | None = None
    capacity: CapacityRequest | None = None
    diagnostics: list[Diagnostic] = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def _line_index(text: str) -> dict[tuple, int]:
    """Map of key paths to 1-based line numbers, from the YAML node tree."""
    lines: dict[tuple, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path: tuple) -> None:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                key = key_node.value
                lines[path + (key,)] = key_node.start_mark.line + 1
                walk(value_node, path + (key,))

    if root is not None:
        walk(root, ())
    return lines


_SECTION_KEYS = {
    (): {
        "schema_version", "seed", "topology", "application", "generations",
        "packet_length", "field", "n_prime", "trials", "failures", "data",
        "eta", "neural", "capacity", "output", "tool_version",
    },
    ("topology",): {
        "mode", "generator", "sources", "branching", "relays", "nodes", "children",
    },
    ("field",): {"m", "polynomial"},
    ("failures",): {"node_dropout_p", "message_loss_p", "seed"},
    ("data",): {"mean", "std"},
    ("eta",): {"kind", "value"},
    ("neural",): {"samples", "epochs", "margin"},
    ("capacity",): {"target", "alphabet", "k_values", "l_values", "cap", "function_class"},
}


class _Checker:
    def __init__(self, data: dict, lines: dict[tuple, int]):
        self.data = data
        self.lines = lines
        self.diagnostics: list[Diagnostic] = []

    def fail(self, path: tuple, message: str) -> None:
        line = self.lines.get(path) or self.lines.get(path[:-1])
        self.diagnostics.append(Diagnostic(line, ".".join(map(str, path)) or "<root>", message))

    def section(self, path: tuple) -> dict | None:
        node = self.data
        for key in path:
            if not isinstance(node, dict) or key not in node:
                return None
            node = node[key]
        if node is None:
            return {}
        if not isinstance(node, dict):
            self.fail(path, "must be a mapping")
            return None
        return node

    def reject_unknown(self, path: tuple, mapping: dict) -> None:
        allowed = _SECTION_KEYS.get(path, set())
        for key in mapping:
            if key not in allowed:
                self.fail(path + (key,), "unknown key")

    def value(self, path: tuple, kind, default=None, required=False):
        node = self.data
        for key in path[:-1]:
            node = node.get(key, {}) if isinstance(node, dict) else {}
        if not isinstance(node, dict) or path[-1] not in node:
            if required:
                self.fail(path, "required key missing")
            return default
        raw = node[path[-1]]
        if kind is float and isinstance(raw, int) and not isinstance(raw, bool):
            raw = float(raw)
        if kind is not None and (not isinstance(raw, kind) or isinstance(raw, bool)):
            self.fail(path, f"expected {getattr(kind, '__name__', kind)}, got {type(raw).__name__}")
            return default
        return raw


def _build_topology(checker: _Checker) -> TopologyConfig | None:
    topo = checker.section(("topology",))
    if topo is None:
        checker.fail(("topology",), "required section missing")
        return None
    checker.reject_unknown(("topology",), topo)
    mode = checker.value(("topology", "mode"), str, default="tree")
    if mode not in ("tree", "dag"):
        checker.fail(("topology", "mode"), "must be 'tree' or 'dag'")
        return None
    generator = checker.value(("topology", "generator"), str,
                              default="explicit" if "nodes" in topo else None)
    if generator is None:
        checker.fail(("topology",), "needs a generator or explicit nodes")
        return None
    if generator == "star":
        n = checker.value(("topology", "sources"), int, required=True)
        if n is None or n < 1:
            checker.fail(("topology", "sources"), "must be a positive integer")
            return None
        return star_topology(n)
    if generator == "balanced_tree":
        n = checker.value(("topology", "sources"), int, required=True)
        branching = checker.value(("topology", "branching"), int, default=2)
        if n is None:
            return None
        try:
            return balanced_tree_topology(n, branching)
        except ValueError as exc:
            checker.fail(("topology", "sources"), str(exc))
            return None
    if generator == "chain":
        relays = checker.value(("topology", "relays"), int, default=1)
        return chain_topology(relays)
    if generator == "explicit":
        nodes = checker.value(("topology", "nodes"), dict, required=True)
        children = checker.value(("topology", "children"), dict, default={})
        if nodes is None:
            return None
        roles = {}
        for name, role in nodes.items():
            if role not in _ROLES:
                checker.fail(("topology", "nodes", name), f"unknown role {role!r}")
                return None
            roles[str(name)] = _ROLES[role]
        child_map = {}
        for parent, kids in (children or {}).items():
            if not isinstance(kids, list):
                checker.fail(("topology", "children", parent), "must be a list of node names")
                return None
            child_map[str(parent)] = [str(k) for k in kids]
        return TopologyConfig(roles=roles, children=child_map, mode=mode)
    checker.fail(("topology", "generator"), f"unknown generator {generator!r}")
    return None


def parse_scenario_text(
    text: str,
    seed_override: int | None = None,
    trials_override: int | None = None,
) -> LoadedScenario:
    """Validate a scenario document and build the runnable values.

    Diagnostics carry line numbers; an empty diagnostic list means the
    scenario (and/or capacity request) is ready to run.
    """
    lines = _line_index(text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        return LoadedScenario(
            resolved={}, diagnostics=[Diagnostic(line, "<document>", f"not valid YAML: {exc}")]
        )
    if not isinstance(data, dict):
        return LoadedScenario(
            resolved={}, diagnostics=[Diagnostic(None, "<document>", "document must be a mapping")]
        )

    checker = _Checker(data, lines)
    checker.reject_unknown((), data)
    for section in ("field", "failures", "data", "eta", "neural", "capacity"):
        if section in data:
            mapping = checker.section((section,))
            if mapping is not None:
                checker.reject_unknown((section,), mapping)

    version = checker.value(("schema_version",), int, required=True)
    if version is not None and version != SCHEMA_VERSION:
        checker.fail(("schema_version",), f"unsupported schema version {version}")

    seed = checker.value(("seed",), int, default=0)
    if seed_override is not None:
        seed = seed_override
    config = _build_topology(checker)
    if config is not None:
        graph_report = validate_config(config)
        for violation in graph_report.violations:
            checker.fail(("topology",), f"{violation.code}: {violation.message}")

    application = checker.value(("application",), str)
    if application is not None and application not in APPLICATIONS:
        checker.fail(("application",), f"must be one of {', '.join(APPLICATIONS)}")

    generations = checker.value(("generations",), int, default=0)
    packet_length = checker.value(("packet_length",), int, default=1)
    n_prime = checker.value(("n_prime",), int)
    trials = checker.value(("trials",), int)
    if trials_override is not None:
        trials = trials_override
    output = checker.value(("output",), str, default="results")

    field_spec = None
    field_resolved = None
    if "field" in data:
        m = checker.value(("field", "m"), int, required=True)
        poly = checker.value(("field", "polynomial"), int)
        if m is not None:
            try:
                field_spec = FieldSpec(m) if poly is None else FieldSpec(m, poly)
                field_resolved = {"m": field_spec.m, "polynomial": field_spec.reduction_polynomial}
            except ValueError as exc:
                checker.fail(("field",), str(exc))

    failures = FailureModel(
        node_dropout_p=checker.value(("failures", "node_dropout_p"), float, default=0.0),
        message_loss_p=checker.value(("failures", "message_loss_p"), float, default=0.0),
        seed=checker.value(("failures", "seed"), int, default=seed),
    )
    data_model = DataModel(
        mean=checker.value(("data", "mean"), float, default=0.0),
        std=checker.value(("data", "std"), float, default=1.0),
    )
    eta = EtaSchedule(
        kind=checker.value(("eta", "kind"), str, default="constant"),
        value=checker.value(("eta", "value"), float, default=0.5),
    )
    if eta.kind not in ("constant", "harmonic"):
        checker.fail(("eta", "kind"), "must be 'constant' or 'harmonic'")
    neural = NeuralParams(
        samples=checker.value(("neural", "samples"), int, default=32),
        epochs=checker.value(("neural", "epochs"), int, default=10),
        margin=checker.value(("neural", "margin"), float, default=0.5),
    )

    capacity = None
    if "capacity" in data:
        target = checker.value(("capacity", "target"), str, required=True)
        if target is not None and target not in TARGET_PRESETS:
            checker.fail(("capacity", "target"), f"must be one of {', '.join(sorted(TARGET_PRESETS))}")
            target = None
        k_values = checker.value(("capacity", "k_values"), list, default=[1])
        l_values = checker.value(("capacity", "l_values"), list, default=[1])
        function_class = checker.value(("capacity", "function_class"), str, default="all")
        if function_class not in ("all", "linear"):
            checker.fail(("capacity", "function_class"), "must be 'all' or 'linear'")
        if target is not None:
            capacity = CapacityRequest(
                target=target,
                alphabet=checker.value(("capacity", "alphabet"), int, default=2),
                k_values=tuple(int(k) for k in k_values),
                l_values=tuple(int(l) for l in l_values),
                cap=checker.value(("capacity", "cap"), int, default=10_000_000),
                function_class=function_class,
            )

    if application is None and capacity is None:
        checker.fail((), "scenario declares neither an application nor a capacity request")

    scenario = None
    if config is not None and application is not None and not checker.diagnostics:
        scenario = Scenario(
            topology=config,
            application=application,
            seed=seed,
            generations=generations,
            packet_length=packet_length,
            field=field_spec,
            n_prime=n_prime,
            trials=trials,
            failures=failures,
            data=data_model,
            eta=eta,
            neural=neural,
        )
        for problem in scenario.validation_errors():
            checker.fail((), problem)
        if checker.diagnostics:
            scenario = None

    resolved: dict = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "topology": _topology_echo(config, data.get("topology") or {}),
        "generations": generations,
        "packet_length": packet_length,
        "failures": {
            "node_dropout_p": failures.node_dropout_p,
            "message_loss_p": failures.message_loss_p,
            "seed": failures.seed,
        },
        "data": {"mean": data_model.mean, "std": data_model.std},
        "eta": {"kind": eta.kind, "value": eta.value},
        "output": output,
    }
    if application is not None:
        resolved["application"] = application
    if field_resolved is not None:
        resolved["field"] = field_resolved
    if n_prime is not None:
        resolved["n_prime"] = n_prime
    if trials is not None:
        resolved["trials"] = trials
    if application == "neural":
        resolved["neural"] = {
            "samples": neural.samples,
            "epochs": neural.epochs,
            "margin": neural.margin,
        }
    if capacity is not None:
        resolved["capacity"] = {
            "target": capacity.target,
            "alphabet": capacity.alphabet,
            "k_values": list(capacity.k_values),
            "l_values": list(capacity.l_values),
            "cap": capacity.cap,
            "function_class": capacity.function_class,
        }

    return LoadedScenario(
        resolved=resolved,
        scenario=scenario,
        capacity=capacity,
        diagnostics=checker.diagnostics,
    )


def _topology_echo(config: TopologyConfig | None, raw: dict) -> dict:
    if config is None:
        return dict(raw)
    return {
        "mode": config.mode,
        "generator": "explicit",
        "nodes": {name: role.value for name, role in config.roles.items()},
        "children": {k: list(v) for k, v in config.children.items()},
    }


def load_scenario_file(
    path: str | Path,
    seed_override: int | None = None,
    trials_override: int | None = None,
) -> LoadedScenario:
    text = Path(path).read_text()
    return parse_scenario_text(text, seed_override=seed_override, trials_override=trials_override)


# -- output emission ---------------------------------------------------------

def render_csv(columns: tuple[str, ...], rows: list[dict[str, object]]) -> str:
    """Deterministic CSV text: header row then rows, LF line endings."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def render_manifest(loaded: LoadedScenario) -> str:
    # Insertion order is kept (sort_keys=False) because node declaration
    # order defines node ids and therefore the rng draw order on replay.
    manifest = dict(loaded.resolved)
    manifest["tool_version"] = nfcsim.__version__
    return yaml.safe_dump(manifest, sort_keys=False)


def write_outputs(
    loaded: LoadedScenario, result: ScenarioResult, out_dir: str | Path
) -> list[Path]:
    """Write every result table as CSV plus the replayable manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, (columns, rows) in result.tables.items():
        path = out / f"{name}.csv"
        path.write_text(render_csv(columns, rows))
        written.append(path)
    manifest_path = out / "manifest.yaml"
    manifest_path.write_text(render_manifest(loaded))
    written.append(manifest_path)
    return written
