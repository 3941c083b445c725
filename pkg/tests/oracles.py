"""Independent reference computations used to freeze and cross-check expected values.

None of these import the code paths they check.
"""
import random
import re
from functools import lru_cache


# -- tree edit distance: plain forest recursion ------------------------------

def as_nested(tree):
    """TableTree -> (label, (children...)) using only public attributes."""
    return ((tree.tag, tree.rowspan, tree.colspan), tuple(as_nested(c) for c in tree.children))


def _forest_size(forest):
    return sum(1 + _forest_size(children) for _, children in forest)


@lru_cache(maxsize=None)
def forest_distance(f, g):
    """Edit distance between ordered forests with unit costs.

    Recurses on the rightmost roots: delete it, insert it, or match the two
    rightmost trees (relabel cost) and solve the remaining forests separately.
    """
    if not f and not g:
        return 0
    if not f:
        return _forest_size(g)
    if not g:
        return _forest_size(f)
    (lv, cv), (lw, cw) = f[-1], g[-1]
    return min(
        forest_distance(f[:-1] + cv, g) + 1,
        forest_distance(f, g[:-1] + cw) + 1,
        forest_distance(cv, cw) + forest_distance(f[:-1], g[:-1]) + (lv != lw),
    )


def brute_ted(a, b):
    return forest_distance((as_nested(a),), (as_nested(b),))


def random_nested_tree(rng: random.Random, max_nodes: int, labels):
    """Random ordered tree as (label, children) with 1..max_nodes nodes."""
    n = rng.randint(1, max_nodes)
    children = [[] for _ in range(n)]
    for k in range(1, n):
        children[rng.randrange(k)].append(k)
    node_labels = [rng.choice(labels) for _ in range(n)]

    def build(k):
        return node_labels[k], [build(c) for c in children[k]]

    return build(0)


# -- HTML structure counts by regex -------------------------------------------

def count_nodes(html: str) -> int:
    """Number of tree nodes: every opening tag except the html wrapper."""
    return len([t for t in re.findall(r"<([a-z]+)[^>]*>", html) if t != "html"])


def td_area(html: str) -> int:
    total = 0
    for attrs in re.findall(r"<td([^>]*)>", html):
        rs = re.search(r"rowspan=\"?(\d+)", attrs)
        cs = re.search(r"colspan=\"?(\d+)", attrs)
        total += (int(rs.group(1)) if rs else 1) * (int(cs.group(1)) if cs else 1)
    return total


# -- grid arithmetic ------------------------------------------------------------

def pixel_iou(a, b):
    """IoU by counting unit pixels; boxes must have integer coordinates."""
    pa = {(x, y) for x in range(a[0], a[2]) for y in range(a[1], a[3])}
    pb = {(x, y) for x in range(b[0], b[2]) for y in range(b[1], b[3])}
    return len(pa & pb) / len(pa | pb)
