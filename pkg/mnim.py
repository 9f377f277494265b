# mnim.py

from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Tuple

import networkx as nx
import torch
import torch.nn.functional as F
from torch import nn

from config import MnimConfig
from errors import ShapeError

# "mnim":   full node: both P terms, U term, dense skips X^{i,0..j-1}
# "dnanet": P terms and U term, skip from X^{i,j-1} only
# "unetpp": U term and dense skips, no P terms
# "unet":   U term and the plain skip X^{i,0}
DECODERS = ("mnim", "dnanet", "unetpp", "unet")

NodeGrid = Dict[Tuple[int, int], torch.Tensor]


@dataclass(frozen=True)
class Term:
    kind: str               # "P" (max-pool of an upper row), "U" (upsampling of a lower row), "X" (same-row skip)
    node: Tuple[int, int]


def node_count(levels: int) -> int:
    return levels * (levels + 1) // 2


def node_exists(i: int, j: int, levels: int) -> bool:
    return i >= 0 and j >= 0 and i + j <= levels - 1


def grid_nodes(levels: int) -> List[Tuple[int, int]]:
    """All nodes in a valid evaluation order: column-major, j then i."""
    return [(i, j) for j in range(levels) for i in range(levels - j)]


def node_input_terms(i: int, j: int, levels: int, decoder: str = "mnim") -> List[Term]:
    """
    Incoming terms of node (i, j), j >= 1, in concatenation order

        [P(X^{i-1,j-1}), P(X^{i-1,j}), U(X^{i+1,j-1}), X^{i,0}, ..., X^{i,j-1}]

    with terms whose source lies outside the triangle omitted.
    """
    if decoder not in DECODERS:
        raise ValueError(f"unknown decoder '{decoder}'; valid names: {', '.join(DECODERS)}")
    if not node_exists(i, j, levels):
        raise IndexError(f"node ({i},{j}) lies outside the triangle of {levels} levels")
    if j < 1:
        raise IndexError(f"node ({i},{j}) is a column-0 node and has no nested inputs")

    terms: List[Term] = []
    if decoder in ("mnim", "dnanet") and i > 0:
        terms.append(Term("P", (i - 1, j - 1)))
        terms.append(Term("P", (i - 1, j)))
    if node_exists(i + 1, j - 1, levels):
        terms.append(Term("U", (i + 1, j - 1)))
    if decoder in ("mnim", "unetpp"):
        terms.extend(Term("X", (i, k)) for k in range(j))
    elif decoder == "dnanet":
        terms.append(Term("X", (i, j - 1)))
    else:
        terms.append(Term("X", (i, 0)))
    return terms


def resolve_decoder(cfg: MnimConfig, decoder: str = "mnim") -> str:
    """The dense_skips switch turns the full module into the skip-pruned one."""
    if decoder == "mnim" and not cfg.dense_skips:
        return "dnanet"
    return decoder


def topology_graph(levels: int, decoder: str = "mnim") -> nx.DiGraph:
    """Dependency DAG of the node grid, with one output node "O{i+1}" per row."""
    g = nx.DiGraph()
    for i, j in grid_nodes(levels):
        g.add_node((i, j), row=i, col=j)
    for i in range(1, levels):
        g.add_edge((i - 1, 0), (i, 0), kind="P")  # recursive column / backbone downsampling
    for i, j in grid_nodes(levels):
        if j == 0:
            continue
        for term in node_input_terms(i, j, levels, decoder):
            g.add_edge(term.node, (i, j), kind=term.kind)
    for i in range(levels):
        g.add_edge((i, levels - 1 - i), f"O{i + 1}", kind="out")
    return g


def live_nodes(levels: int, decoder: str = "mnim") -> List[Tuple[int, int]]:
    """Nodes that feed some row output, in evaluation order. Plain U-Net wiring leaves the rest unused."""
    g = topology_graph(levels, decoder)
    live = set()
    for i in range(levels):
        live |= nx.ancestors(g, f"O{i + 1}")
    return [n for n in grid_nodes(levels) if n in live]


# ---------- OPERATORS ----------

def downsample_P(x: torch.Tensor) -> torch.Tensor:
    """2x2 max-pooling with stride 2."""
    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise ShapeError(f"max-pooling needs even spatial dims, got {tuple(x.shape[-2:])}")
    return F.max_pool2d(x, kernel_size=2, stride=2)


def upsample_U(x: torch.Tensor) -> torch.Tensor:
    """x2 bilinear upsampling (align_corners=False)."""
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class ConvBlock(nn.Module):
    """F(.): `depth` cascaded 3x3 conv -> BN -> ReLU layers, padding-preserving."""

    def __init__(self, in_channels: int, out_channels: int, depth: int = 2):
        super().__init__()
        layers: "OrderedDict[str, nn.Module]" = OrderedDict()
        for d in range(depth):
            layers[f"conv{d}"] = nn.Conv2d(in_channels if d == 0 else out_channels, out_channels, 3, padding=1)
            layers[f"bn{d}"] = nn.BatchNorm2d(out_channels)
            layers[f"relu{d}"] = nn.ReLU(inplace=True)
        self.body = nn.Sequential(layers)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.constant_(m.bias, 0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def conv_block_F(block: ConvBlock, x: torch.Tensor) -> torch.Tensor:
    return block(x)


def node_inputs(i: int, j: int, grid: NodeGrid, levels: int, decoder: str = "mnim") -> List[torch.Tensor]:
    """Materialize the incoming feature maps of node (i, j) from already computed nodes."""
    out: List[torch.Tensor] = []
    for term in node_input_terms(i, j, levels, decoder):
        x = grid[term.node]
        if term.kind == "P":
            x = downsample_P(x)
        elif term.kind == "U":
            x = upsample_U(x)
        out.append(x)
    return out


# ---------- MODULE ----------

class MNIM(nn.Module):
    """
    Multi-scale nested interaction module: a triangular grid of conv nodes X^{i,j}.

    Column 0 is seeded from the projected backbone levels (column_mode
    "seeded") or built recursively, X^{i,0} = F(P(X^{i-1,0})), from the first
    level only ("recursive"). Every j > 0 node is F over the concatenation of
    its node_inputs. Row i's output is its terminal node X^{i, L-1-i}.
    """

    def __init__(self, cfg: MnimConfig, decoder: str = "mnim"):
        super().__init__()
        cfg.validate()
        self.levels = cfg.levels
        self.width = cfg.node_width
        self.column_mode = cfg.column_mode
        self.decoder = resolve_decoder(cfg, decoder)
        if self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder '{decoder}'; valid names: {', '.join(DECODERS)}")

        self.active_nodes = live_nodes(self.levels, self.decoder)
        nodes: "OrderedDict[str, nn.Module]" = OrderedDict()
        for i, j in self.active_nodes:
            fan_in = 1 if j == 0 else len(node_input_terms(i, j, self.levels, self.decoder))
            nodes[f"node_{i}_{j}"] = ConvBlock(fan_in * self.width, self.width, cfg.conv_block_depth)
        self.nodes = nn.ModuleDict(nodes)
        self.last_call_counts: Counter = Counter()

    @property
    def seed_levels(self) -> int:
        """Number of pyramid levels the module consumes."""
        return 1 if self.column_mode == "recursive" else self.levels

    def run(self, seeds: List[torch.Tensor]) -> Tuple[NodeGrid, List[torch.Tensor]]:
        if len(seeds) != self.seed_levels:
            raise ShapeError(f"MNIM expects {self.seed_levels} seed level(s), got {len(seeds)}")
        for s in seeds:
            if s.shape[1] != self.width:
                raise ShapeError(f"seed width {s.shape[1]} != node width {self.width}")

        self.last_call_counts = Counter()
        grid: NodeGrid = {}
        for i, j in self.active_nodes:
            if j == 0:
                if self.column_mode == "seeded":
                    x = seeds[i]
                else:
                    x = seeds[0] if i == 0 else downsample_P(grid[(i - 1, 0)])
            else:
                x = torch.cat(node_inputs(i, j, grid, self.levels, self.decoder), dim=1)
            grid[(i, j)] = self.nodes[f"node_{i}_{j}"](x)
            self.last_call_counts[(i, j)] += 1

        outputs = [grid[(i, self.levels - 1 - i)] for i in range(self.levels)]
        return grid, outputs

    def forward(self, seeds: List[torch.Tensor]) -> List[torch.Tensor]:
        return self.run(seeds)[1]


def run_mnim(module: MNIM, seeds: List[torch.Tensor]) -> Tuple[NodeGrid, List[torch.Tensor]]:
    return module.run(seeds)
