"""Structure-only tree-edit-distance similarity (TEDS-S) for table tag trees."""
from __future__ import annotations

from dataclasses import dataclass, field

from .convert import check_nesting, parse_tags
from .errors import MalformedHtml


@dataclass
class TableTree:
    tag: str
    colspan: int = 1
    rowspan: int = 1
    children: list["TableTree"] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, int, int]:
        return self.tag, self.rowspan, self.colspan

    @property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)

    def signature(self) -> tuple:
        return self.key, tuple(c.signature() for c in self.children)

    def bracket(self) -> str:
        label = self.tag
        if self.tag == "td" and (self.colspan, self.rowspan) != (1, 1):
            label += f"[{self.rowspan}x{self.colspan}]"
        return "{" + label + "".join(c.bracket() for c in self.children) + "}"


@dataclass(frozen=True)
class EditCostModel:
    insert_cost: float = 1.0
    delete_cost: float = 1.0

    def substitute(self, a: TableTree, b: TableTree) -> float:
        return 0.0 if a.key == b.key else 1.0


UNIT_COSTS = EditCostModel()


def build_tree(tags) -> TableTree:
    """Tree of table/tbody/tr/td nodes; the html wrapper is dropped."""
    if isinstance(tags, str):
        tags = parse_tags(tags)
    tags = tuple(tags)
    check_nesting(tags)
    root = None
    stack: list[TableTree] = []
    for tag in tags:
        if tag.name == "html":
            continue
        if tag.closing:
            stack.pop()
            continue
        node = TableTree(tag.name, tag.colspan or 1, tag.rowspan or 1)
        if stack:
            stack[-1].children.append(node)
        else:
            root = node
        stack.append(node)
    if root is None:
        raise MalformedHtml("no <table> element")
    return root


def _postorder(tree: TableTree):
    """Postorder node list and the leftmost-leaf index of every node."""
    nodes: list[TableTree] = []
    leftmost: list[int] = []

    def walk(node):
        first = None
        for child in node.children:
            idx = walk(child)
            if first is None:
                first = idx
        nodes.append(node)
        leftmost.append(len(nodes) - 1 if first is None else first)
        return leftmost[-1]

    walk(tree)
    return nodes, leftmost


def _keyroots(leftmost: list[int]) -> list[int]:
    highest: dict[int, int] = {}
    for i, l in enumerate(leftmost):
        highest[l] = i
    return sorted(highest.values())


def tree_edit_distance(a: TableTree, b: TableTree, costs: EditCostModel = UNIT_COSTS) -> float:
    """Ordered labelled tree edit distance via the keyroot forest recursion."""
    if costs == UNIT_COSTS and a.signature() == b.signature():
        return 0.0
    na_nodes, la = _postorder(a)
    nb_nodes, lb = _postorder(b)
    na, nb = len(na_nodes), len(nb_nodes)
    ins, dele = costs.insert_cost, costs.delete_cost
    if costs == UNIT_COSTS:
        keys_a = [n.key for n in na_nodes]
        keys_b = [n.key for n in nb_nodes]

        def sub(x, y):
            return 0.0 if keys_a[x] == keys_b[y] else 1.0
    else:
        def sub(x, y):
            return costs.substitute(na_nodes[x], nb_nodes[y])

    td = [[0.0] * nb for _ in range(na)]
    for i in _keyroots(la):
        li = la[i]
        m = i - li + 2
        for j in _keyroots(lb):
            lj = lb[j]
            n = j - lj + 2
            fd = [[0.0] * n for _ in range(m)]
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + ins
            for x in range(1, m):
                ax = x + li - 1
                prev, cur = fd[x - 1], fd[x]
                cur[0] = prev[0] + dele
                lax = la[ax]
                td_row = td[ax]
                for y in range(1, n):
                    by = y + lj - 1
                    if lax == li and lb[by] == lj:
                        best = min(prev[y] + dele, cur[y - 1] + ins, prev[y - 1] + sub(ax, by))
                        td_row[by] = best
                    else:
                        best = min(prev[y] + dele, cur[y - 1] + ins,
                                   fd[lax - li][lb[by] - lj] + td_row[by])
                    cur[y] = best
    return td[na - 1][nb - 1]


def _as_tree(x) -> TableTree:
    if isinstance(x, TableTree):
        return x
    return build_tree(x)


def teds_s(gt, pred, costs: EditCostModel = UNIT_COSTS) -> float:
    """1 - distance / max(|gt|, |pred|), in [0, 1]."""
    a, b = _as_tree(gt), _as_tree(pred)
    dist = tree_edit_distance(a, b, costs)
    return max(0.0, 1.0 - dist / max(a.size, b.size))
