"""Scenario files: a line-oriented format, its parser, and the canonical
printer.

The format is sectioned INI-style text with one record per line, chosen
for diffability and golden testing:

    [general]
    name = fairness
    duration_ns = 200000000
    seed = 1

    [topology]
    node = client subnet=1
    link = client gbps=200 prop_delay_ns=500

    [scus]
    scu = client index=0 kind=passthrough

    [flows]
    flow = client server opcode=read size=131072 start_ns=0 scu=0 depth=4

Record lines start with a repeated key (``node``, ``link``, ``scu``,
``flow``) followed by positional names and ``key=value`` attributes.
Unknown keys, missing sections, and range violations are reported with
their line numbers.  ``format_scenario`` prints the canonical form: parse,
print, parse is the identity on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .core import ConfigError, LinkSpec
from .hostpath import IrqConfig
from .scu import MAX_SCUS, PLUGIN_KINDS

OPCODES = ("write", "read", "raw")
CC_ALGORITHMS = ("window", "dcqcn")


class ScenarioError(ConfigError):
    def __init__(self, errors: List[Tuple[int, str]]):
        self.errors = errors
        msg = "; ".join(f"line {line}: {text}" for line, text in errors)
        super().__init__(msg or "invalid scenario")


@dataclass
class NodeDecl:
    name: str
    subnet: int = 0


@dataclass
class ScuDecl:
    node: str
    index: int
    kind: str
    args: Dict[str, int] = field(default_factory=dict)


@dataclass
class FlowDecl:
    src: str
    dst: str
    opcode: str
    size_bytes: int
    start_ns: int
    scu_index: int
    depth: int = 1
    count: int = 0          # 0 = keep posting until the run ends
    gap_ns: int = 0         # >0 = post on a fixed schedule instead
    payload: str = "zero"   # zero | random


@dataclass
class CcConfig:
    algorithm: str = "window"
    window_bytes: int = 0          # 0 = one bandwidth-delay product
    swap_to: str = ""
    swap_at_ns: int = -1
    load_at_ns: int = -1           # default: swap_at - 2 * reconfig delay
    reconfig_delay_ns: int = 8_000_000
    dcqcn: Dict[str, float] = field(default_factory=dict)


@dataclass
class TransportDecl:
    mtu_payload: int = 4096
    header_bytes: int = 82
    ack_every: int = 1
    cnp_interval_ns: int = 50_000
    rto_ns: int = 1_000_000
    symmetric_read_gating: bool = False
    tlb_capacity: int = 64
    tlb_page_bytes: int = 4096
    tlb_miss_ns: int = 1000


@dataclass
class RingDecl:
    capacity_bytes: int = 1 << 16
    dma_mode: str = "combined"
    poll_budget: int = 64


@dataclass
class FirewallDecl:
    node: str = ""
    scu_index: int = 0
    threshold_gbps: float = 0.0
    timer_period_ns: int = 1_000_000


@dataclass
class CollectiveDecl:
    op: str = "broadcast"      # broadcast | gather | both
    mode: str = "flat"         # flat | tree (broadcast only)
    size_bytes: int = 1 << 20
    root: str = ""


@dataclass
class Scenario:
    name: str = "unnamed"
    duration_ns: int = 0
    seed: int = 0
    sample_period_ns: int = 1_000_000
    synthetic_payload: bool = False
    nodes: List[NodeDecl] = field(default_factory=list)
    links: Dict[str, LinkSpec] = field(default_factory=dict)
    scus: List[ScuDecl] = field(default_factory=list)
    flows: List[FlowDecl] = field(default_factory=list)
    cc: CcConfig = field(default_factory=CcConfig)
    transport: TransportDecl = field(default_factory=TransportDecl)
    ring: RingDecl = field(default_factory=RingDecl)
    irq: IrqConfig = field(default_factory=IrqConfig)
    firewall: Optional[FirewallDecl] = None
    collective: Optional[CollectiveDecl] = None

    def node_names(self) -> List[str]:
        return [n.name for n in self.nodes]


_SECTIONS = ("general", "topology", "scus", "flows", "cc", "dcqcn",
             "transport", "ring", "irq", "firewall", "collective")

_GENERAL_KEYS = {"name", "duration_ns", "seed", "sample_period_ns",
                 "synthetic_payload"}
_CC_KEYS = {"algorithm", "window_bytes", "swap_to", "swap_at_ns",
            "load_at_ns", "reconfig_delay_ns"}
_DCQCN_KEYS = {"g", "alpha_timer_ns", "rate_timer_ns", "byte_counter_bytes",
               "ai_rate_bps", "hai_rate_bps", "fast_recovery_steps",
               "min_rate_bps"}
_TRANSPORT_KEYS = {f.name for f in TransportDecl.__dataclass_fields__.values()}
_RING_KEYS = {"capacity_bytes", "dma_mode", "poll_budget"}
_IRQ_KEYS = {"coalesce_count", "timeout_ns"}
_FIREWALL_KEYS = {"node", "scu", "threshold_gbps", "timer_period_ns"}
_COLLECTIVE_KEYS = {"op", "mode", "size_bytes", "root"}
_LINK_KEYS = {f.name for f in LinkSpec.__dataclass_fields__.values()}
_FLOW_KEYS = {"opcode", "size", "start_ns", "scu", "depth", "count",
              "gap_ns", "payload"}


def _to_bool(raw: str) -> bool:
    if raw in ("true", "1", "yes"):
        return True
    if raw in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _to_num(raw: str):
    try:
        return int(raw)
    except ValueError:
        return float(raw)


def _split_attrs(tokens: List[str]) -> Dict[str, str]:
    attrs = {}
    for tok in tokens:
        if "=" not in tok:
            raise ValueError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        attrs[k] = v
    return attrs


def parse_scenario(text: str) -> Scenario:
    """Parse and validate; raises ScenarioError carrying (line, message)."""
    sc = Scenario()
    errors: List[Tuple[int, str]] = []
    section = None
    seen_topology = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                errors.append((lineno, f"unknown section [{section}]"))
                section = None
            elif section == "topology":
                seen_topology = True
            elif section == "firewall":
                sc.firewall = FirewallDecl()
            elif section == "collective":
                sc.collective = CollectiveDecl()
            continue
        if section is None:
            errors.append((lineno, f"content outside any section: {line!r}"))
            continue
        if "=" not in line:
            errors.append((lineno, f"expected key = value, got {line!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            _apply_line(sc, section, key, value, lineno, errors)
        except (ValueError, ConfigError) as exc:
            errors.append((lineno, str(exc)))

    errors.extend((0, msg) for msg in _validate(sc, seen_topology))
    if errors:
        raise ScenarioError(sorted(errors))
    return sc


def _apply_line(sc: Scenario, section: str, key: str, value: str,
                lineno: int, errors: List[Tuple[int, str]]) -> None:
    if section == "general":
        if key not in _GENERAL_KEYS:
            raise ValueError(f"unknown key {key!r} in [general]")
        if key == "name":
            sc.name = value
        elif key == "synthetic_payload":
            sc.synthetic_payload = _to_bool(value)
        else:
            setattr(sc, key, int(value))
    elif section == "topology":
        if key == "node":
            tokens = value.split()
            attrs = _split_attrs(tokens[1:])
            unknown = set(attrs) - {"subnet"}
            if unknown:
                raise ValueError(f"unknown node attribute(s): {sorted(unknown)}")
            sc.nodes.append(NodeDecl(tokens[0], int(attrs.get("subnet", len(sc.nodes)))))
        elif key == "link":
            tokens = value.split()
            attrs = _split_attrs(tokens[1:])
            unknown = set(attrs) - _LINK_KEYS
            if unknown:
                raise ValueError(f"unknown link attribute(s): {sorted(unknown)}")
            kwargs = {}
            for k, v in attrs.items():
                kwargs[k] = _to_bool(v) if k == "lossless" else _to_num(v)
            sc.links[tokens[0]] = LinkSpec(**kwargs)
        else:
            raise ValueError(f"unknown key {key!r} in [topology]")
    elif section == "scus":
        if key != "scu":
            raise ValueError(f"unknown key {key!r} in [scus]")
        tokens = value.split()
        attrs = _split_attrs(tokens[1:])
        index = int(attrs.pop("index"))
        kind = attrs.pop("kind")
        if not 0 <= index < MAX_SCUS:
            raise ValueError(f"scu index {index} outside 0..{MAX_SCUS - 1}")
        if kind not in PLUGIN_KINDS:
            raise ValueError(f"unknown scu kind {kind!r}")
        sc.scus.append(ScuDecl(tokens[0], index, kind,
                               {k: int(v) for k, v in attrs.items()}))
    elif section == "flows":
        if key != "flow":
            raise ValueError(f"unknown key {key!r} in [flows]")
        tokens = value.split()
        if len(tokens) < 2:
            raise ValueError("flow needs source and destination nodes")
        attrs = _split_attrs(tokens[2:])
        unknown = set(attrs) - _FLOW_KEYS
        if unknown:
            raise ValueError(f"unknown flow attribute(s): {sorted(unknown)}")
        opcode = attrs.get("opcode", "write")
        if opcode not in OPCODES:
            raise ValueError(f"unknown opcode {opcode!r}")
        scu_index = int(attrs.get("scu", 0))
        if not 0 <= scu_index < MAX_SCUS:
            raise ValueError(f"scu index {scu_index} outside 0..{MAX_SCUS - 1}")
        payload = attrs.get("payload", "zero")
        if payload not in ("zero", "random"):
            raise ValueError(f"unknown payload mode {payload!r}")
        sc.flows.append(FlowDecl(
            tokens[0], tokens[1], opcode, int(attrs.get("size", 4096)),
            int(attrs.get("start_ns", 0)), scu_index,
            int(attrs.get("depth", 1)), int(attrs.get("count", 0)),
            int(attrs.get("gap_ns", 0)), payload))
    elif section == "cc":
        if key not in _CC_KEYS:
            raise ValueError(f"unknown key {key!r} in [cc]")
        if key == "algorithm":
            if value not in CC_ALGORITHMS:
                raise ValueError(f"unknown cc algorithm {value!r}")
            sc.cc.algorithm = value
        elif key == "swap_to":
            if value not in CC_ALGORITHMS:
                raise ValueError(f"unknown cc algorithm {value!r}")
            sc.cc.swap_to = value
        elif key == "window_bytes":
            sc.cc.window_bytes = 0 if value == "auto" else int(value)
        else:
            setattr(sc.cc, key, int(value))
    elif section == "dcqcn":
        if key not in _DCQCN_KEYS:
            raise ValueError(f"unknown key {key!r} in [dcqcn]")
        sc.cc.dcqcn[key] = _to_num(value)
    elif section == "transport":
        if key not in _TRANSPORT_KEYS:
            raise ValueError(f"unknown key {key!r} in [transport]")
        if key == "symmetric_read_gating":
            sc.transport.symmetric_read_gating = _to_bool(value)
        else:
            setattr(sc.transport, key, int(value))
    elif section == "ring":
        if key not in _RING_KEYS:
            raise ValueError(f"unknown key {key!r} in [ring]")
        if key == "dma_mode":
            if value not in ("combined", "split"):
                raise ValueError(f"unknown dma mode {value!r}")
            sc.ring.dma_mode = value
        else:
            setattr(sc.ring, key, int(value))
    elif section == "irq":
        if key not in _IRQ_KEYS:
            raise ValueError(f"unknown key {key!r} in [irq]")
        setattr(sc.irq, key, int(value))
    elif section == "firewall":
        if key not in _FIREWALL_KEYS:
            raise ValueError(f"unknown key {key!r} in [firewall]")
        if key == "node":
            sc.firewall.node = value
        elif key == "scu":
            sc.firewall.scu_index = int(value)
        elif key == "threshold_gbps":
            sc.firewall.threshold_gbps = float(value)
        else:
            setattr(sc.firewall, key, int(value))
    elif section == "collective":
        if key not in _COLLECTIVE_KEYS:
            raise ValueError(f"unknown key {key!r} in [collective]")
        if key == "op":
            if value not in ("broadcast", "gather", "both"):
                raise ValueError(f"unknown collective op {value!r}")
            sc.collective.op = value
        elif key == "mode":
            if value not in ("flat", "tree"):
                raise ValueError(f"unknown collective mode {value!r}")
            sc.collective.mode = value
        elif key == "size_bytes":
            sc.collective.size_bytes = int(value)
        else:
            sc.collective.root = value


def _validate(sc: Scenario, seen_topology: bool) -> List[str]:
    msgs: List[str] = []
    if not seen_topology:
        msgs.append("missing [topology] section")
    if sc.duration_ns < 0:
        msgs.append("duration_ns cannot be negative")
    names = sc.node_names()
    if len(set(names)) != len(names):
        msgs.append("duplicate node names")
    for node in names:
        if node not in sc.links:
            msgs.append(f"node {node!r} has no link")
    for link_node in sc.links:
        if link_node not in names:
            msgs.append(f"link references unknown node {link_node!r}")
    for decl in sc.scus:
        if decl.node not in names:
            msgs.append(f"scu on unknown node {decl.node!r}")
    seen_scu = set()
    for decl in sc.scus:
        if (decl.node, decl.index) in seen_scu:
            msgs.append(f"duplicate scu index {decl.index} on node {decl.node!r}")
        seen_scu.add((decl.node, decl.index))
    for i, flow in enumerate(sc.flows):
        if flow.src not in names or flow.dst not in names:
            msgs.append(f"flow {i} references unknown node")
            continue
        if flow.src == flow.dst:
            msgs.append(f"flow {i} has identical endpoints")
        if flow.size_bytes <= 0:
            msgs.append(f"flow {i} has non-positive size")
        if flow.start_ns > sc.duration_ns:
            msgs.append(f"flow {i} starts after the run ends")
        if flow.opcode == "raw":
            if flow.gap_ns < 1:
                msgs.append(f"flow {i}: raw flows need gap_ns >= 1")
        else:
            # payload lands at the destination of a write, the source of a
            # read; the referenced SCU must exist there
            delivery = flow.dst if flow.opcode == "write" else flow.src
            if (delivery, flow.scu_index) not in seen_scu:
                msgs.append(f"flow {i} steers to SCU {flow.scu_index} which is"
                            f" not declared on node {delivery!r}")
    if sc.synthetic_payload and any(d.kind == "hashpart" for d in sc.scus):
        msgs.append("hashpart SCUs need materialized payloads")
    if sc.flows and any(f.payload == "random" for f in sc.flows) and sc.synthetic_payload:
        msgs.append("random payloads conflict with synthetic_payload")
    if sc.firewall is not None:
        if sc.firewall.node not in names:
            msgs.append(f"firewall on unknown node {sc.firewall.node!r}")
        if sc.firewall.threshold_gbps <= 0:
            msgs.append("firewall threshold must be positive")
    if sc.collective is not None:
        if sc.collective.root not in names:
            msgs.append(f"collective root is not a node: {sc.collective.root!r}")
        if sc.collective.size_bytes <= 0:
            msgs.append("collective size must be positive")
        if sc.flows:
            msgs.append("a collective scenario cannot also declare flows")
    for node, spec in sc.links.items():
        if sc.transport.mtu_payload + sc.transport.header_bytes > spec.mtu_bytes:
            msgs.append(f"segment size exceeds the {node!r} link MTU")
    return msgs


def validate_scenario(text: str) -> List[Tuple[int, str]]:
    try:
        parse_scenario(text)
        return []
    except ScenarioError as exc:
        return exc.errors


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and value == int(value):
        return str(int(value))
    return str(value)


def format_scenario(sc: Scenario) -> str:
    """Canonical text form: every value explicit, fixed ordering."""
    out: List[str] = []
    out.append("[general]")
    out.append(f"name = {sc.name}")
    out.append(f"duration_ns = {sc.duration_ns}")
    out.append(f"seed = {sc.seed}")
    out.append(f"sample_period_ns = {sc.sample_period_ns}")
    out.append(f"synthetic_payload = {_fmt(sc.synthetic_payload)}")
    out.append("")
    out.append("[topology]")
    for node in sc.nodes:
        out.append(f"node = {node.name} subnet={node.subnet}")
    for name in (n.name for n in sc.nodes):
        spec = sc.links[name]
        out.append(
            f"link = {name} gbps={_fmt(spec.gbps)} prop_delay_ns={spec.prop_delay_ns}"
            f" mtu_bytes={spec.mtu_bytes} queue_cap_bytes={spec.queue_cap_bytes}"
            f" ecn_threshold_bytes={spec.ecn_threshold_bytes}"
            f" lossless={_fmt(spec.lossless)}")
    if sc.scus:
        out.append("")
        out.append("[scus]")
        for decl in sc.scus:
            extra = "".join(f" {k}={v}" for k, v in sorted(decl.args.items()))
            out.append(f"scu = {decl.node} index={decl.index} kind={decl.kind}{extra}")
    if sc.flows:
        out.append("")
        out.append("[flows]")
        for f in sc.flows:
            out.append(
                f"flow = {f.src} {f.dst} opcode={f.opcode} size={f.size_bytes}"
                f" start_ns={f.start_ns} scu={f.scu_index} depth={f.depth}"
                f" count={f.count} gap_ns={f.gap_ns} payload={f.payload}")
    out.append("")
    out.append("[cc]")
    out.append(f"algorithm = {sc.cc.algorithm}")
    out.append(f"window_bytes = {sc.cc.window_bytes if sc.cc.window_bytes else 'auto'}")
    if sc.cc.swap_to:
        out.append(f"swap_to = {sc.cc.swap_to}")
        out.append(f"swap_at_ns = {sc.cc.swap_at_ns}")
        out.append(f"load_at_ns = {sc.cc.load_at_ns}")
    out.append(f"reconfig_delay_ns = {sc.cc.reconfig_delay_ns}")
    if sc.cc.dcqcn:
        out.append("")
        out.append("[dcqcn]")
        for k in sorted(sc.cc.dcqcn):
            out.append(f"{k} = {_fmt(sc.cc.dcqcn[k])}")
    out.append("")
    out.append("[transport]")
    tr = sc.transport
    for name in ("mtu_payload", "header_bytes", "ack_every", "cnp_interval_ns",
                 "rto_ns", "tlb_capacity", "tlb_page_bytes", "tlb_miss_ns"):
        out.append(f"{name} = {getattr(tr, name)}")
    out.append(f"symmetric_read_gating = {_fmt(tr.symmetric_read_gating)}")
    out.append("")
    out.append("[ring]")
    out.append(f"capacity_bytes = {sc.ring.capacity_bytes}")
    out.append(f"dma_mode = {sc.ring.dma_mode}")
    out.append(f"poll_budget = {sc.ring.poll_budget}")
    out.append("")
    out.append("[irq]")
    out.append(f"coalesce_count = {sc.irq.coalesce_count}")
    out.append(f"timeout_ns = {sc.irq.timeout_ns}")
    if sc.firewall is not None:
        out.append("")
        out.append("[firewall]")
        out.append(f"node = {sc.firewall.node}")
        out.append(f"scu = {sc.firewall.scu_index}")
        out.append(f"threshold_gbps = {_fmt(sc.firewall.threshold_gbps)}")
        out.append(f"timer_period_ns = {sc.firewall.timer_period_ns}")
    if sc.collective is not None:
        out.append("")
        out.append("[collective]")
        out.append(f"op = {sc.collective.op}")
        out.append(f"mode = {sc.collective.mode}")
        out.append(f"size_bytes = {sc.collective.size_bytes}")
        out.append(f"root = {sc.collective.root}")
    return "\n".join(out) + "\n"
