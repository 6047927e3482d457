//! Bundled test feeders and matching default scenarios.
//!
//! Topologies and device placements follow the published test systems.
//! Line impedances are synthesized (deterministically) since the source
//! impedance data is not available; absolute voltages are therefore only
//! qualitatively comparable with published results.

use super::{
    kilo_to_pu, Assignment, CapacitorSpec, ChainSpec, FeederModel, FeederSpec, InverterSpec, LineSpec, MarkovChain,
    Quantity,
};

/// Inverter oversizing factor applied to every PV plant.
const INVERTER_OVERSIZE: f64 = 1.08;

fn build(
    base_mva: f64,
    base_kv: f64,
    edges: &[(i64, i64, f64)],
    r_per_len: f64,
    x_per_len: f64,
    caps_kvar: &[(i64, f64)],
    pv_kw: &[(i64, f64)],
) -> FeederSpec {
    let root = edges[0].0;
    let mut buses = vec![root];
    for &(_, to, _) in edges {
        buses.push(to);
    }
    let lines = edges
        .iter()
        .map(|&(from, to, len)| LineSpec { from, to, r_pu: r_per_len * len, x_pu: x_per_len * len })
        .collect();
    let capacitors =
        caps_kvar.iter().map(|&(bus, kvar)| CapacitorSpec { bus, q_pu: kilo_to_pu(kvar, base_mva) }).collect();
    let inverters = pv_kw
        .iter()
        .map(|&(bus, kw)| {
            let p = kilo_to_pu(kw, base_mva);
            InverterSpec { bus, p_cap_pu: p, s_cap_pu: INVERTER_OVERSIZE * p }
        })
        .collect();
    FeederSpec { base_mva, base_kv, v0: 1.0, buses, lines, capacitors, inverters }
}

/// Relative segment lengths cycle through a fixed pattern so impedances
/// vary along the feeder without a random source.
fn length(i: usize, scale: f64) -> f64 {
    const PATTERN: [f64; 7] = [1.0, 0.6, 1.4, 0.8, 1.2, 0.7, 1.1];
    scale * PATTERN[i % PATTERN.len()]
}

pub const SCE47_CAPACITORS: [(i64, f64); 3] = [(3, 120.0), (37, 180.0), (47, 180.0)];
pub const SCE47_PV: [(i64, f64); 5] = [(2, 300.0), (16, 80.0), (18, 300.0), (21, 400.0), (22, 200.0)];

/// 47-bus industrial feeder; bus 1 is the substation.
pub fn sce47() -> FeederModel {
    // (from, to, lateral?) trunk 1..15 with laterals hanging off it.
    let topo: [(i64, i64, bool); 46] = [
        (1, 2, false),
        (2, 3, false),
        (3, 4, false),
        (4, 5, false),
        (5, 6, false),
        (6, 7, false),
        (7, 8, false),
        (8, 9, false),
        (9, 10, false),
        (10, 11, false),
        (11, 12, false),
        (12, 13, false),
        (13, 14, false),
        (14, 15, false),
        (3, 16, true),
        (16, 17, true),
        (5, 18, true),
        (18, 19, true),
        (19, 20, true),
        (7, 21, true),
        (21, 22, true),
        (9, 23, true),
        (23, 24, true),
        (24, 25, true),
        (25, 26, true),
        (10, 27, true),
        (27, 28, true),
        (11, 29, true),
        (29, 30, true),
        (30, 31, true),
        (31, 32, true),
        (12, 33, true),
        (33, 34, true),
        (34, 35, true),
        (35, 36, true),
        (36, 37, true),
        (13, 38, true),
        (38, 39, true),
        (39, 40, true),
        (14, 41, true),
        (41, 42, true),
        (42, 43, true),
        (15, 44, true),
        (44, 45, true),
        (45, 46, true),
        (46, 47, true),
    ];
    let edges: Vec<(i64, i64, f64)> = topo
        .iter()
        .enumerate()
        .map(|(i, &(a, b, lateral))| (a, b, length(i, if lateral { 0.7 } else { 1.0 })))
        .collect();
    let spec = build(1.0, 12.35, &edges, 0.0030, 0.0060, &SCE47_CAPACITORS, &SCE47_PV);
    FeederModel::from_spec(&spec).expect("bundled 47-bus feeder is valid")
}

pub const IEEE123_CAPACITORS: [(i64, f64); 8] =
    [(3, 50.0), (20, 80.0), (44, 100.0), (93, 100.0), (96, 100.0), (98, 100.0), (100, 100.0), (114, 60.0)];
pub const IEEE123_PV: [(i64, f64); 7] =
    [(47, 100.0), (49, 16.0), (63, 70.0), (73, 20.0), (104, 20.0), (108, 30.0), (113, 10.0)];

/// IEEE 123-bus test feeder with switches closed and regulator/switch
/// nodes merged into the adjacent line; bus 1 is the substation.
pub fn ieee123() -> FeederModel {
    #[rustfmt::skip]
    let topo: [(i64, i64); 113] = [
        (1, 2), (1, 3), (1, 7), (3, 4), (3, 5), (5, 6), (7, 8), (8, 12), (8, 9), (8, 13),
        (9, 14), (13, 34), (13, 18), (14, 11), (14, 10), (15, 16), (15, 17), (18, 19), (18, 21),
        (19, 20), (21, 22), (21, 23), (23, 24), (23, 25), (25, 26), (25, 28), (26, 27), (26, 31),
        (27, 33), (28, 29), (29, 30), (31, 32), (34, 15), (35, 36), (35, 40), (36, 37), (36, 38),
        (38, 39), (40, 41), (40, 42), (42, 43), (42, 44), (44, 45), (44, 47), (45, 46), (47, 48),
        (47, 49), (49, 50), (50, 51), (52, 53), (53, 54), (54, 55), (54, 57), (55, 56), (57, 58),
        (57, 60), (58, 59), (60, 61), (60, 62), (62, 63), (63, 64), (64, 65), (65, 66), (67, 68),
        (67, 72), (67, 97), (68, 69), (69, 70), (70, 71), (72, 73), (72, 76), (73, 74), (74, 75),
        (76, 77), (76, 86), (77, 78), (78, 79), (78, 80), (80, 81), (81, 82), (81, 84), (82, 83),
        (84, 85), (86, 87), (87, 88), (87, 89), (89, 90), (89, 91), (91, 92), (91, 93), (93, 94),
        (93, 95), (95, 96), (97, 98), (98, 99), (99, 100), (101, 102), (101, 105), (102, 103),
        (103, 104), (105, 106), (105, 108), (106, 107), (108, 109), (109, 110), (110, 111),
        (110, 112), (112, 113), (113, 114), (13, 52), (18, 35), (60, 67), (97, 101),
    ];
    let edges: Vec<(i64, i64, f64)> = topo.iter().enumerate().map(|(i, &(a, b))| (a, b, length(i, 1.0))).collect();
    let spec = build(1.0, 4.16, &edges, 0.0010, 0.0020, &IEEE123_CAPACITORS, &IEEE123_PV);
    FeederModel::from_spec(&spec).expect("bundled 123-bus feeder is valid")
}

/// Sticky feeder-wide regime chain: the state persists for several
/// intervals on average, so the mean injection of one interval is
/// informative about the next.
fn regime_chain(levels: Vec<f64>, stay: f64) -> MarkovChain {
    let n = levels.len();
    let leave = (1.0 - stay) / (n - 1) as f64;
    let transition = (0..n).map(|i| (0..n).map(|j| if i == j { stay } else { leave }).collect()).collect();
    MarkovChain { levels, transition, initial: None }
}

fn jitter_chain() -> MarkovChain {
    MarkovChain {
        levels: vec![0.8, 1.0, 1.2],
        transition: vec![vec![0.6, 0.4, 0.0], vec![0.2, 0.6, 0.2], vec![0.0, 0.4, 0.6]],
        initial: None,
    }
}

fn scenario(model: &FeederModel, n_intervals: usize, slots: usize, peak_load_pu: f64) -> ChainSpec {
    let load_buses: Vec<i64> =
        (0..model.n_buses()).filter(|&k| !model.is_capacitor_node(k)).map(|k| model.label(k)).collect();
    // Deterministic spread of nominal bus loads in [0.5, 1.0] x peak.
    let scales: Vec<f64> =
        (0..load_buses.len()).map(|i| peak_load_pu * (0.5 + 0.5 * ((i * 7) % 11) as f64 / 10.0)).collect();
    ChainSpec {
        n_intervals,
        slots_per_interval: slots,
        power_factor: 0.8,
        chains: vec![
            // Feeder-wide load regime (light / medium / heavy).
            regime_chain(vec![0.3, 0.7, 1.0], 0.97),
            // Irradiance regime as a fraction of PV capacity.
            regime_chain(vec![0.0, 0.4, 0.9], 0.97),
            jitter_chain(),
        ],
        assignments: vec![
            Assignment {
                quantity: Quantity::Load,
                chain: 0,
                buses: Some(load_buses.clone()),
                scales: Some(scales.iter().map(|s| s * 0.8).collect()),
                per_capacity: false,
                shared: true,
            },
            Assignment {
                quantity: Quantity::Load,
                chain: 2,
                buses: Some(load_buses),
                scales: Some(scales.iter().map(|s| s * 0.2).collect()),
                per_capacity: false,
                shared: false,
            },
            Assignment {
                quantity: Quantity::Generation,
                chain: 1,
                buses: None,
                scales: None,
                per_capacity: true,
                shared: true,
            },
        ],
    }
}

/// Default Markov scenario for [`sce47`].
pub fn sce47_scenario(n_intervals: usize, slots_per_interval: usize) -> ChainSpec {
    scenario(&sce47(), n_intervals, slots_per_interval, 0.030)
}

/// Markov scenario for an arbitrary feeder with a moderate per-bus peak
/// load.
pub fn default_scenario(model: &FeederModel, n_intervals: usize, slots_per_interval: usize) -> ChainSpec {
    scenario(model, n_intervals, slots_per_interval, 0.020)
}

/// Default Markov scenario for [`ieee123`].
pub fn ieee123_scenario(n_intervals: usize, slots_per_interval: usize) -> ChainSpec {
    scenario(&ieee123(), n_intervals, slots_per_interval, 0.010)
}
