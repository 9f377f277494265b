# graph_utils.py

from typing import Optional

from graphviz import Digraph, ExecutableNotFound

from mnim import live_nodes, topology_graph

EDGE_STYLES = {
    "P": {"color": "blue", "label": "P"},
    "U": {"color": "red", "label": "U"},
    "X": {"color": "gray40", "style": "dashed"},
    "out": {"color": "black", "style": "bold"},
}


def build_decoder_digraph(levels: int, decoder: str = "mnim") -> Digraph:
    """
    Graphviz rendering of the decoder node grid: one rank per row, column 0
    (the backbone seeds) as boxes, unused nodes greyed out.
    """
    graph = topology_graph(levels, decoder)
    live = set(live_nodes(levels, decoder))

    dot = Digraph(name=f"{decoder}_L{levels}", format="png")
    dot.attr(rankdir="LR")

    for i in range(levels):
        with dot.subgraph() as row:
            row.attr(rank="same")
            for j in range(levels - i):
                name = f"X_{i}_{j}"
                attrs = {"shape": "box" if j == 0 else "circle"}
                if (i, j) not in live:
                    attrs.update(color="gray75", fontcolor="gray75")
                row.node(name, label=f"X{i},{j}", **attrs)
            row.node(f"O{i + 1}", shape="doublecircle")

    for src, dst, data in graph.edges(data=True):
        s = src if isinstance(src, str) else f"X_{src[0]}_{src[1]}"
        d = dst if isinstance(dst, str) else f"X_{dst[0]}_{dst[1]}"
        dot.edge(s, d, **EDGE_STYLES.get(data.get("kind"), {}))
    return dot


def render_decoder_graph(levels: int, decoder: str, output_basename: str) -> Optional[str]:
    """
    Write output_basename + ".png" and return its path, or None when the
    graphviz binaries are not installed.
    """
    dot = build_decoder_digraph(levels, decoder)
    try:
        return dot.render(output_basename, cleanup=True)
    except ExecutableNotFound:
        print("[warn] graphviz executable not found; skipping decoder graph")
        return None
