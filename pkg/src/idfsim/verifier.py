"""Floorplan model and isolation design-rule checks.

The floorplan file is line-oriented text (`#` comments):

    DEVICE <cols> <rows>
    TILE <x> <y> <kind>
    REGION <name> GROUP <g> RECT <x0> <y0> <x1> <y1>
    FENCE RECT <x0> <y0> <x1> <y1>
    PIN <name> GROUP <g> SITE <x> <y> BANK <b> PKG <prow> <pcol>
    NET <name> [CLOCK] SRC <region> LOADS <r1,r2,...> PIPS <x:y:used|unused;...>

Checks (one per rule class):

    IDF-1  provenance header (never a violation)
    IDF-2  pins of multiple isolation groups sharing an IOB bank
    IDF-3  package-adjacent pins (8 compass directions) of different groups
    IDF-4  isolation regions overlapping or in 8-way contact
    IDF-5  4-way adjacent occupied tiles of different groups
    IDF-6  routing: multi-region loads / fence PIPs / shared-tile nets

Tiles default to NULL (vacant); only declared non-NULL tiles inside a
region rectangle count as occupied logic.  All checks are pure: they never
modify the floorplan.
"""

import math
from dataclasses import dataclass, field

TILE_KINDS = ("CLB", "INT", "BRAM", "DSP", "IOB", "NULL")

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"

# Fence-width consequences: spans removed from the routing resources able
# to cross the fence, by orientation; None marks an uncrossable fence.
_H_CONSEQUENCES = ((1, 1, {1}), (2, 3, {1, 2}), (4, 5, {1, 2, 4}))
_V_CONSEQUENCES = ((1, 1, {1}), (2, 3, {1, 2}), (4, 5, {1, 2, 4}),
                   (6, 8, {1, 2, 4, 6}))
_H_UNCROSSABLE_FROM = 6
_V_UNCROSSABLE_FROM = 9


class _Uncrossable:
    def __repr__(self):
        return "Uncrossable"


UNCROSSABLE = _Uncrossable()


class FloorplanError(ValueError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


@dataclass(frozen=True)
class IsolationRegion:
    name: str
    group: str
    rect: tuple  # inclusive (x0, y0, x1, y1)


@dataclass(frozen=True)
class PinPlacement:
    name: str
    group: str
    site: tuple
    bank: int
    package: tuple  # (prow, pcol)


@dataclass(frozen=True)
class NetRecord:
    name: str
    is_clock: bool
    source: str
    loads: tuple
    pips: tuple  # ((x, y, used), ...)


@dataclass
class Floorplan:
    cols: int
    rows: int
    tiles: dict = field(default_factory=dict)
    regions: list = field(default_factory=list)
    fence: set = field(default_factory=set)
    pins: list = field(default_factory=list)
    nets: list = field(default_factory=list)

    def region(self, name):
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)


@dataclass(frozen=True)
class DrcViolation:
    check: str
    severity: str
    subjects: tuple
    message: str

    def line(self):
        return f"{self.check}|{self.severity}|{','.join(self.subjects)}|{self.message}"


def _parse_rect(tokens, lineno):
    try:
        x0, y0, x1, y1 = (int(t) for t in tokens)
    except ValueError:
        raise FloorplanError(lineno, f"bad rectangle {tokens}") from None
    if x0 > x1 or y0 > y1:
        raise FloorplanError(lineno, f"inverted rectangle {tokens}")
    return (x0, y0, x1, y1)


def _rect_in_grid(rect, plan):
    x0, y0, x1, y1 = rect
    return 0 <= x0 and 0 <= y0 and x1 < plan.cols and y1 < plan.rows


def parse_floorplan(text):
    """Parse and structurally validate a floorplan description."""
    plan = None
    pending = []  # (lineno, tokens) gathered before full validation
    names = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kw = tokens[0].upper()
        if kw == "DEVICE":
            if plan is not None:
                raise FloorplanError(lineno, "duplicate DEVICE line")
            if len(tokens) != 3:
                raise FloorplanError(lineno, "DEVICE needs <cols> <rows>")
            try:
                plan = Floorplan(cols=int(tokens[1]), rows=int(tokens[2]))
            except ValueError:
                raise FloorplanError(lineno, "DEVICE size must be integers") from None
            continue
        if plan is None:
            raise FloorplanError(lineno, "DEVICE must come first")
        if kw == "TILE":
            if len(tokens) != 4:
                raise FloorplanError(lineno, "TILE needs <x> <y> <kind>")
            kind = tokens[3].upper()
            if kind not in TILE_KINDS:
                raise FloorplanError(lineno, f"unknown tile kind {tokens[3]!r}")
            try:
                x, y = int(tokens[1]), int(tokens[2])
            except ValueError:
                raise FloorplanError(lineno, "TILE coordinates must be integers") from None
            if not (0 <= x < plan.cols and 0 <= y < plan.rows):
                raise FloorplanError(lineno, f"tile ({x},{y}) outside grid")
            plan.tiles[(x, y)] = kind
        elif kw == "REGION":
            if len(tokens) != 9 or tokens[2].upper() != "GROUP" or tokens[4].upper() != "RECT":
                raise FloorplanError(lineno, "REGION <name> GROUP <g> RECT <x0> <y0> <x1> <y1>")
            name = tokens[1]
            if name in names:
                raise FloorplanError(lineno, f"duplicate region name {name!r}")
            names.add(name)
            rect = _parse_rect(tokens[5:9], lineno)
            region = IsolationRegion(name, tokens[3], rect)
            if not _rect_in_grid(rect, plan):
                raise FloorplanError(lineno, f"region {name!r} outside grid")
            plan.regions.append(region)
        elif kw == "FENCE":
            if len(tokens) != 6 or tokens[1].upper() != "RECT":
                raise FloorplanError(lineno, "FENCE RECT <x0> <y0> <x1> <y1>")
            rect = _parse_rect(tokens[2:6], lineno)
            if not _rect_in_grid(rect, plan):
                raise FloorplanError(lineno, "fence outside grid")
            x0, y0, x1, y1 = rect
            for x in range(x0, x1 + 1):
                for y in range(y0, y1 + 1):
                    plan.fence.add((x, y))
        elif kw == "PIN":
            if (len(tokens) != 12 or tokens[2].upper() != "GROUP"
                    or tokens[4].upper() != "SITE" or tokens[7].upper() != "BANK"
                    or tokens[9].upper() != "PKG"):
                raise FloorplanError(
                    lineno, "PIN <name> GROUP <g> SITE <x> <y> BANK <b> PKG <r> <c>")
            name = tokens[1]
            if name in names:
                raise FloorplanError(lineno, f"duplicate pin name {name!r}")
            names.add(name)
            try:
                site = (int(tokens[5]), int(tokens[6]))
                bank = int(tokens[8])
                package = (int(tokens[10]), int(tokens[11]))
            except ValueError:
                raise FloorplanError(lineno, "PIN fields must be integers") from None
            if not (0 <= site[0] < plan.cols and 0 <= site[1] < plan.rows):
                raise FloorplanError(lineno, f"pin site {site} outside grid")
            plan.pins.append(PinPlacement(name, tokens[3], site, bank, package))
        elif kw == "NET":
            pending.append((lineno, tokens))
        else:
            raise FloorplanError(lineno, f"unknown keyword {tokens[0]!r}")

    if plan is None:
        raise FloorplanError(1, "missing DEVICE line")

    # Fence tiles carry no placed logic.
    for xy in plan.fence:
        if plan.tiles.get(xy, "NULL") != "NULL":
            raise FloorplanError(1, f"non-NULL tile {xy} inside the fence")

    region_names = {r.name for r in plan.regions}
    for lineno, tokens in pending:
        plan.nets.append(_parse_net(tokens, lineno, region_names, plan))
    return plan


def _parse_net(tokens, lineno, region_names, plan):
    i = 1
    if len(tokens) < 2:
        raise FloorplanError(lineno, "NET needs a name")
    name = tokens[i]
    i += 1
    is_clock = False
    if i < len(tokens) and tokens[i].upper() == "CLOCK":
        is_clock = True
        i += 1
    if i + 1 >= len(tokens) or tokens[i].upper() != "SRC":
        raise FloorplanError(lineno, "NET missing SRC <region>")
    source = tokens[i + 1]
    i += 2
    if i + 1 >= len(tokens) or tokens[i].upper() != "LOADS":
        raise FloorplanError(lineno, "NET missing LOADS <r1,r2,...>")
    loads = tuple(t for t in tokens[i + 1].split(",") if t)
    if not loads:
        raise FloorplanError(lineno, "NET needs at least one load region")
    i += 2
    pips = []
    if i < len(tokens):
        if tokens[i].upper() != "PIPS":
            raise FloorplanError(lineno, f"unexpected token {tokens[i]!r}")
        if i + 1 < len(tokens):
            for entry in tokens[i + 1].split(";"):
                if not entry:
                    continue
                parts = entry.split(":")
                if len(parts) != 3 or parts[2].lower() not in ("used", "unused"):
                    raise FloorplanError(lineno, f"bad PIP entry {entry!r}")
                try:
                    x, y = int(parts[0]), int(parts[1])
                except ValueError:
                    raise FloorplanError(lineno, f"bad PIP entry {entry!r}") from None
                pips.append((x, y, parts[2].lower() == "used"))
    for region in (source, *loads):
        if region not in region_names:
            raise FloorplanError(lineno, f"net {name!r} references unknown "
                                         f"region {region!r}")
    return NetRecord(name, is_clock, source, loads, tuple(pips))


# -- IDF-1: provenance ---------------------------------------------------

_IDF1_FIELDS = ("tool_version", "date", "design", "directory", "user",
                "platform", "host")


def check_idf1(plan, env=None):
    """Report provenance header lines; this check never yields violations."""
    env = env or {}
    return [f"{key}: {env.get(key, 'unknown')}" for key in _IDF1_FIELDS]


# -- IDF-2: IOB bank sharing ----------------------------------------------


def check_idf2(plan, strict=False):
    banks = {}
    for pin in plan.pins:
        banks.setdefault(pin.bank, []).append(pin)
    violations = []
    severity = SEVERITY_ERROR if strict else SEVERITY_WARNING
    for bank in sorted(banks):
        groups = sorted({p.group for p in banks[bank]})
        if len(groups) > 1:
            violations.append(DrcViolation(
                "IDF-2", severity, tuple(groups),
                f"bank {bank} hosts pins from {len(groups)} isolation groups"))
    return violations


# -- IDF-3: package pin adjacency -----------------------------------------


def check_idf3(plan):
    violations = []
    pins = plan.pins
    for i in range(len(pins)):
        for j in range(i + 1, len(pins)):
            a, b = pins[i], pins[j]
            if a.group == b.group:
                continue
            dr = abs(a.package[0] - b.package[0])
            dc = abs(a.package[1] - b.package[1])
            if max(dr, dc) == 1:
                violations.append(DrcViolation(
                    "IDF-3", SEVERITY_ERROR, (a.name, b.name),
                    f"package pins {a.package} and {b.package} of groups "
                    f"{a.group}/{b.group} are adjacent"))
    return violations


# -- IDF-4: region adjacency ----------------------------------------------


def _rect_gap(a, b):
    """Chebyshev distance between the closest tiles of two rectangles."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    dx = max(bx0 - ax1, ax0 - bx1, 0)
    dy = max(by0 - ay1, ay0 - by1, 0)
    return max(dx, dy)


def check_idf4(plan):
    violations = []
    regions = plan.regions
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            a, b = regions[i], regions[j]
            if a.group == b.group:
                continue
            gap = _rect_gap(a.rect, b.rect)
            if gap == 0:
                kind = "overlaps"
            elif gap == 1:
                kind = "touches"
            else:
                continue
            violations.append(DrcViolation(
                "IDF-4", SEVERITY_ERROR, (a.name, b.name),
                f"region {a.name} ({a.group}) {kind} region {b.name} ({b.group})"))
    return violations


# -- IDF-5: occupied tile adjacency ----------------------------------------


def _occupied_tiles(plan):
    """(x, y) -> group for every non-NULL tile inside a region rectangle."""
    owned = {}
    for (x, y), kind in plan.tiles.items():
        if kind == "NULL":
            continue
        for region in plan.regions:
            x0, y0, x1, y1 = region.rect
            if x0 <= x <= x1 and y0 <= y <= y1:
                owned[(x, y)] = region.group
                break
    return owned


def check_idf5(plan):
    owned = _occupied_tiles(plan)
    violations = []
    for (x, y) in sorted(owned):
        group = owned[(x, y)]
        # Only look right and up, so each unordered pair reports once.
        for nx, ny in ((x + 1, y), (x, y + 1)):
            other = owned.get((nx, ny))
            if other is not None and other != group:
                violations.append(DrcViolation(
                    "IDF-5", SEVERITY_ERROR,
                    (f"({x},{y})", f"({nx},{ny})"),
                    f"occupied tiles ({x},{y})[{group}] and ({nx},{ny})"
                    f"[{other}] are adjacent"))
    return violations


# -- IDF-6: routing ---------------------------------------------------------


def _is_inter_region(net):
    return any(load != net.source for load in net.loads)


def check_idf6(plan):
    violations = []
    inter = [n for n in plan.nets if _is_inter_region(n)]

    for net in inter:
        load_regions = sorted(set(net.loads))
        if len(load_regions) > 1:
            violations.append(DrcViolation(
                "IDF-6", SEVERITY_ERROR, (net.name,),
                f"net {net.name} has loads in {len(load_regions)} isolated "
                f"regions ({','.join(load_regions)})"))

    for net in inter:
        fence_pips = [(x, y, used) for (x, y, used) in net.pips
                      if (x, y) in plan.fence]
        if not fence_pips:
            continue
        if net.is_clock and not any(used for _, _, used in fence_pips):
            continue  # clock nets may leave unused PIPs in the fence
        violations.append(DrcViolation(
            "IDF-6", SEVERITY_ERROR, (net.name,),
            f"net {net.name} has PIPs in the fence"))

    tiles = {}
    for net in inter:
        for (x, y, _used) in net.pips:
            tiles.setdefault((x, y), set()).add(net.name)
    nets_by_name = {n.name: n for n in inter}
    for (x, y) in sorted(tiles):
        names = sorted(tiles[(x, y)])
        if len(names) < 2:
            continue
        endpoints = {(nets_by_name[n].source, tuple(sorted(nets_by_name[n].loads)))
                     for n in names}
        if len(endpoints) > 1:
            violations.append(DrcViolation(
                "IDF-6", SEVERITY_ERROR, tuple(names),
                f"tile ({x},{y}) hosts inter-region nets without a common "
                f"source and load"))
    return violations


def run_all_checks(plan, env=None, strict_banks=False):
    header = check_idf1(plan, env)
    violations = []
    violations.extend(check_idf2(plan, strict=strict_banks))
    violations.extend(check_idf3(plan))
    violations.extend(check_idf4(plan))
    violations.extend(check_idf5(plan))
    violations.extend(check_idf6(plan))
    return header, violations


# -- fence geometry ----------------------------------------------------------


def fence_consequence(width, orientation):
    """Routing spans removed by a fence of the given width, or UNCROSSABLE."""
    if width < 1:
        raise ValueError("fence width must be >= 1")
    o = orientation.lower()[0]
    if o == "h":
        table, limit = _H_CONSEQUENCES, _H_UNCROSSABLE_FROM
    elif o == "v":
        table, limit = _V_CONSEQUENCES, _V_UNCROSSABLE_FROM
    else:
        raise ValueError(f"orientation must be horizontal or vertical, "
                         f"not {orientation!r}")
    if width >= limit:
        return UNCROSSABLE
    for lo, hi, spans in table:
        if lo <= width <= hi:
            return frozenset(spans)
    raise AssertionError("unreachable")


def min_fence_between(plan, region_a, region_b):
    """Minimal (horizontal, vertical) tile gap between two region rectangles.

    A gap is math.inf when the rectangles do not face each other on that
    axis; overlapping regions are an error.
    """
    a = plan.region(region_a) if isinstance(region_a, str) else region_a
    b = plan.region(region_b) if isinstance(region_b, str) else region_b
    ax0, ay0, ax1, ay1 = a.rect
    bx0, by0, bx1, by1 = b.rect
    overlap_x = ax0 <= bx1 and bx0 <= ax1
    overlap_y = ay0 <= by1 and by0 <= ay1
    if overlap_x and overlap_y:
        raise ValueError(f"regions {a.name} and {b.name} overlap")
    h_width = math.inf
    v_width = math.inf
    if overlap_y:
        h_width = max(bx0 - ax1, ax0 - bx1) - 1
    if overlap_x:
        v_width = max(by0 - ay1, ay0 - by1) - 1
    return h_width, v_width


def render_report(header, violations):
    lines = ["IDF-1|info|provenance|" + " ".join(header)]
    lines.extend(v.line() for v in violations)
    return "\n".join(lines)
