"""Deterministic discrete-event simulator of a stream-compute SmartNIC
datapath: triage, offloaded RDMA transport, swappable congestion control,
stream compute units with fair arbitration, the slow-path host ring, and a
multi-node harness with scenario files and CSV metrics."""

from .core import (ConfigError, FlowKey, HeaderKind, InvariantViolation,
                   LinkSpec, OtherFlow, Packet, ProtocolError, RoceFlow,
                   SimTime, TcpFlow, cycles_within_budget,
                   per_packet_budget_ns, serialization_delay_ns)
from .triage import Route, SteeringTable, classify, steer
from .memory import AddressSpace, Tlb
from .congestion import (Ack, CcDecision, Cnp, DcqcnCc, DcqcnParams, DualSlot,
                         EcnEcho, Sent, Timer, WindowCc)
from .hostpath import (IrqCoalescer, IrqConfig, IrqDecision, Ring,
                       encode_entries, encode_entry, decode_entries,
                       irq_decision)
from .hashpart import HashPartitioner, hash_fold
from .scu import (Arbiter, ChunkMeta, ControlPlaneAgent, FlowMonitor,
                  FlowStats, HashPartition, Passthrough, RateLimiter,
                  ScuDescriptor, Sink, SinkKind, arbiter_grant, monitor_update,
                  scu_process)
from .transport import (CompletionInfo, Opcode, QueuePair, RoceEngine,
                        TransportConfig, WorkRequest)
from .scenario import (Scenario, ScenarioError, format_scenario,
                       parse_scenario, validate_scenario)
from .sim import World
from .collective import broadcast, gather
from .runner import RunResult, run_scenario

__version__ = "0.1.0"
