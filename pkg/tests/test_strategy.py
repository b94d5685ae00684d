import warnings

import numpy as np
import pytest
import shapely
from shapely.geometry import box
from shapely.ops import unary_union

from gradslice.errors import BedOverflow
from gradslice.fixtures import dogbone_design, radial_design, xy_gradient_design
from gradslice.palette import build_palette, zipper_bands
from gradslice.profile import MachineProfile
from gradslice.slicer import GradientSlicer
from gradslice.strategy import (Extrude, LayerPlan, LookaheadClampWarning, SetState, apply_lookahead,
                                apply_zippering, drop_redundant_states, insert_purge_towers, place_towers,
                                strategy1_paths, tower_side)
from gradslice.toolpath import PrintSettings, ToolPath, clip_paths_to_faces

from conftest import V_960


def line(x0, x1, y=0.0, color=0, band=-1, role="infill"):
    return ToolPath([[x0, y], [x1, y]], role=role, color=color, band=band)


@pytest.fixture(scope="module")
def dogbone_s1():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return GradientSlicer(strategy=1, n_colors=4, profile=MachineProfile(v_melt=V_960),
                              max_layers=2).fit(dogbone_design(0.4))


def test_dogbone_regions_and_reversal(dogbone_s1):
    p0, p1 = dogbone_s1.plans_
    assert p0.region_colors() == [0, 1, 2, 3]
    assert p1.region_colors() == [3, 2, 1, 0]


def test_dogbone_purge_precedes_each_region(dogbone_s1):
    assert dogbone_s1.purge_layout_.side == pytest.approx(19.6)
    for plan in dogbone_s1.plans_:
        items = plan.items
        for k, it in enumerate(items):
            if isinstance(it, SetState):
                nxt = items[k + 1]
                assert isinstance(nxt, Extrude) and nxt.role == "purge" and nxt.color == it.color


def test_every_path_preceded_by_matching_state(dogbone_s1):
    state = None
    for plan in dogbone_s1.plans_:
        for it in plan.items:
            if isinstance(it, SetState):
                state = it.color
            else:
                assert it.color == state


def test_towers_disjoint_and_on_bed(dogbone_s1):
    layout = dogbone_s1.purge_layout_
    ox, oy = dogbone_s1.offset_
    boxes = [box(*layout.footprint(c)) for c in layout.locations]
    for i, a in enumerate(boxes):
        x0, y0, x1, y1 = a.bounds
        assert x0 + ox >= 0 and y0 + oy >= 0 and x1 + ox <= 300 and y1 + oy <= 300
        assert not a.intersects(box(*dogbone_s1.model_.bbox2d))
        for b in boxes[i + 1:]:
            assert not a.intersects(b)
    for c in layout.locations:
        assert sum(p.length for p in layout.paths(c, 0)) >= layout.length


def test_single_colour_primes_once():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=1, n_colors=1, profile=MachineProfile(v_melt=V_960),
                           max_layers=3).fit(dogbone_design(0.6))
    counts = [p.purge_count() for p in s.plans_]
    assert counts[0] > 0 and counts[1:] == [0, 0]
    assert [len(p.events()) for p in s.plans_] == [1, 0, 0]


def test_tower_side_examples():
    assert tower_side(960, 0.4, 0.4) == pytest.approx(19.6)
    assert tower_side(450, 0.4, 0.4) == pytest.approx(13.5)
    assert tower_side(0, 0.4, 0.4) == 0.0


def test_no_towers_without_dead_volume():
    pal = build_palette(2)
    plans = [LayerPlan(0.1, 0, [SetState(0), Extrude(line(0, 10, color=0)), SetState(1),
                                Extrude(line(10, 20, color=1))])]
    out, layout = insert_purge_towers(plans, MachineProfile(v_melt=0), PrintSettings(), pal, (0, -1, 20, 1))
    assert layout is None
    assert out[0].purge_count() == 0


def test_purge_threshold_skips_small_changes():
    pal = build_palette(4)
    plans = [LayerPlan(0.1, 0, [SetState(0), Extrude(line(0, 10, color=0)), SetState(1),
                                Extrude(line(10, 20, color=1))])]
    prof = MachineProfile(v_melt=10)
    out, layout = insert_purge_towers(plans, prof, PrintSettings(), pal, (0, -1, 20, 1), threshold=0.3)
    # only the first state (from nothing) qualifies
    assert list(layout.locations) == [0]
    assert {it.color for it in out[0].extrusions() if it.role == "purge"} == {0}


def test_tower_bed_overflow():
    prof = MachineProfile(bed_size=(60, 60))
    with pytest.raises(BedOverflow):
        place_towers(range(8), 19.6, (-20, -20, 20, 20), prof)


def test_fixed_purge_locations():
    prof = MachineProfile(purge_locations=((20, 20), (60, 20)))
    locs = place_towers([0, 1], 10, (-5, -5, 5, 5), prof)
    assert locs == {0: (20 - 150.0, 20 - 150.0), 1: (60 - 150.0, 20 - 150.0)}
    with pytest.raises(BedOverflow):
        place_towers([0, 1, 2], 10, (-5, -5, 5, 5), prof)


def test_zippering_alternates():
    zipper = zipper_bands(build_palette(2), 0.15)
    paths = [line(0, 10, y=k * 0.4, color=0, band=0) for k in range(6)]
    out = apply_zippering(paths, zipper, build_palette(2))
    assert [p.color for p in out] == [0, 1, 0, 1, 0, 1]


def test_zippering_beta_zero_identity():
    zipper = zipper_bands(build_palette(4), 0.0)
    paths = [line(0, 10, color=1, band=0)]
    assert apply_zippering(paths, zipper, build_palette(4)) == paths


def test_zippered_paths_lie_in_band():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=1, n_colors=4, zipper_beta=0.05, profile=MachineProfile(),
                           max_layers=1).fit(xy_gradient_design(60, 60, 0.2))
        layer = s.layers_[0]
        labeled = clip_paths_to_faces(strategy1_paths(layer, s.settings_, 0), layer.faces)
    zipped = apply_zippering(labeled, s.zipper_, s.palette_)
    frac = s.model_.fractions
    per_band = {}
    for p in zipped:
        if p.band < 0:
            continue
        m = frac(*p.midpoint(), layer.z)[1]
        lo, hi = s.zipper_.bands[p.band]
        assert lo - 1e-3 <= m <= hi + 1e-3
        per_band.setdefault(p.band, []).append(p.color)
    assert per_band
    for band, colors in per_band.items():
        assert colors == [band + (k % 2) for k in range(len(colors))]


def test_strategy1_monotone_jump():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=1, n_colors=6, profile=MachineProfile(),
                           max_layers=2).fit(xy_gradient_design(60, 60, 0.4))
    pal = s.palette_
    for plan in s.plans_:
        mids = [pal.midpoint(c) for c in plan.region_colors()]
        d = np.diff(mids)
        assert np.all(d > 0) if plan.index % 2 == 0 else np.all(d < 0)
        assert np.all(np.abs(d) <= pal.alpha * 3 + 1e-12)


def test_strategy1_labels_match_faces():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=1, n_colors=6, max_layers=1).fit(xy_gradient_design(60, 60, 0.2))
    layer, plan = s.layers_[0], s.plans_[0]
    assert set(plan.region_colors()) == {f.color for f in layer.faces}
    for it in plan.extrusions():
        mid = shapely.Point(it.path.midpoint())
        owners = [f.color for f in layer.faces if f.polygon.buffer(1e-6).contains(mid)]
        assert it.color in owners


@pytest.mark.parametrize("fill", ["concentric", "rectilinear"])
def test_strategy2_no_purge_one_event_per_colour(fill):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=2, n_colors=12, fill=fill, profile=MachineProfile(v_melt=V_960),
                           lookahead=0, max_layers=1).fit(radial_design())
    plan = s.plans_[0]
    assert plan.purge_count() == 0
    assert s.purge_layout_ is None
    colors = [ev.color for ev in plan.events()]
    assert len(colors) == len(set(colors)) == 12


def test_strategy2_coverage_dogbone():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=2, n_colors=4, lookahead=0, max_layers=1).fit(dogbone_design(0.4))
    layer, plan = s.layers_[0], s.plans_[0]
    assert sum(f.area for f in layer.faces) == pytest.approx(layer.outline.area, rel=5e-3)
    cov = unary_union([shapely.LineString(it.path.vertices).buffer(s.settings_.w / 2)
                       for it in plan.extrusions()])
    assert cov.intersection(layer.outline).area >= 0.995 * layer.outline.area


def test_strategy2_colours_separated():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=2, n_colors=4, lookahead=0, max_layers=1).fit(dogbone_design(0.4))
    w = s.settings_.w
    lines = {}
    for it in s.plans_[0].extrusions():
        lines.setdefault(it.color, []).append(shapely.LineString(it.path.vertices))
    geoms = {c: unary_union(v) for c, v in lines.items()}
    for a in geoms:
        for b in geoms:
            if a < b:
                assert geoms[a].distance(geoms[b]) >= w - 1e-6


def test_nonlinear_grade_unequal_areas():
    design = 'fgrade(["1-(x/40)^2", "(x/40)^2"], ["yellow", "blue"]) { translate([20, 0, 0]) { rectprism(40, 10, 0.2); } }'
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=2, n_colors=4, lookahead=0, max_layers=1).fit(design)
    areas = {f.color: f.area for f in s.layers_[0].faces}
    assert areas[0] > areas[3]
    lengths = s.plans_[0].length_by_color()
    ratio = [lengths[c] / areas[c] for c in areas]
    assert max(ratio) / min(ratio) < 1.15


def test_lookahead_zero_and_quarter_point():
    plans = [LayerPlan(0.1, 0, [SetState(0), Extrude(line(0, 10)), SetState(1), Extrude(line(10, 20, color=1))])]
    same = apply_lookahead(plans, 0)
    assert same[0].items == plans[0].items
    out = apply_lookahead(plans, 5.0)
    items = out[0].items
    kinds = [type(it).__name__ for it in items]
    assert kinds == ["SetState", "Extrude", "SetState", "Extrude", "Extrude"]
    assert items[1].path.length == pytest.approx(5.0)
    assert np.allclose(items[1].path.end, [5, 0])


def test_lookahead_conserves_length_and_states():
    plans = []
    for li in range(3):
        items = []
        for c in range(4):
            items.append(SetState(c if li % 2 == 0 else 3 - c))
            items.append(Extrude(line(0, 7.5 + c, y=li)))
        plans.append(LayerPlan(0.1 + 0.2 * li, li, items))
    plans = drop_redundant_states(plans)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LookaheadClampWarning)
        out = apply_lookahead(plans, 12.3)
    total = lambda ps: sum(p.total_length for p in ps)
    assert total(out) == pytest.approx(total(plans), rel=1e-12)
    before = [ev.color for p in plans for ev in p.events()]
    after = [ev.color for p in out for ev in p.events()]
    assert after == before[-len(after):]


def test_lookahead_clamp_warning():
    plans = [LayerPlan(0.1, 0, [SetState(0), Extrude(line(0, 10)), SetState(1), Extrude(line(10, 20))])]
    with pytest.warns(LookaheadClampWarning):
        out = apply_lookahead(plans, 50)
    assert [ev.color for ev in out[0].events()] == [1]
    with pytest.raises(ValueError):
        apply_lookahead(plans, -1)


def test_drop_redundant_states():
    plans = [LayerPlan(0.1, 0, [SetState(0), Extrude(line(0, 1))]),
             LayerPlan(0.3, 1, [SetState(0), Extrude(line(0, 1)), SetState(1), Extrude(line(0, 1))])]
    out = drop_redundant_states(plans)
    assert [len(p.events()) for p in out] == [1, 1]
