from graphviz import Digraph

from model.model_graph import ModelGraph

GROUP_COLORS = {"backbone": "lightblue", "neck": "lightyellow", "head": "lightpink"}


def render_graph(model: ModelGraph) -> Digraph:
    """
    Draw the layer graph, one node per layer.

    Args:
        model: Model to draw

    Returns:
        A graphviz Digraph; `.source` is the DOT text
    """
    dot = Digraph(comment="RipeLoc layer graph",
                  node_attr={"shape": "box", "style": "filled", "fontname": "courier"})
    dot.attr("graph", rankdir="TB")
    dot.node("input", "image\n3ch", shape="ellipse", fillcolor="white")
    for layer in model.layers:
        label = f"{layer.index}: {layer.kind}\n{layer.c_in}->{layer.c_out}"
        if layer.stride > 1:
            label += f" /{layer.stride}"
        if layer.frozen:
            label += "\n(frozen)"
        dot.node(str(layer.index), label, fillcolor=GROUP_COLORS.get(layer.group, "white"))
        for source in layer.inputs:
            dot.edge("input" if source == -1 else str(source), str(layer.index))
    return dot
