mod support;

use dasmr_core::eval::shortest_path_length;
use dasmr_core::rng::substream;
use rand::Rng;
use support::vis_graph;

#[test]
fn oracle_reproduces_worked_example() {
    let expect = 2.0 * (0.75f64.sqrt() + 0.5 * (std::f64::consts::FRAC_PI_2 - (0.75f64.sqrt() / 0.5).atan()));
    let got = vis_graph::shortest_path([0.0, 0.0], [0.0, 2.0], [0.0, 1.0], 0.5, 2000);
    assert!((got - expect).abs() < 1e-4, "{got} vs {expect}");
}

#[test]
fn tangent_arc_matches_visibility_graph() {
    let mut rng = substream(17, "spl");
    let mut blocked = 0;
    for _ in 0..1000 {
        let center: [f64; 2] = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let radius: f64 = rng.random_range(0.2..1.0);
        let outside = |rng: &mut rand_chacha::ChaCha8Rng| loop {
            let p: [f64; 2] = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            // Clear of the circumscribed polygon so both models see a free point.
            if (p[0] - center[0]).hypot(p[1] - center[1]) > radius * 1.001 {
                return p;
            }
        };
        let (s, g) = (outside(&mut rng), outside(&mut rng));
        let exact = shortest_path_length(s, g, center, radius).unwrap();
        let brute = vis_graph::shortest_path(s, g, center, radius, 2000);
        if exact > (s[0] - g[0]).hypot(s[1] - g[1]) + 1e-9 {
            blocked += 1;
        }
        assert!((exact - brute).abs() < 1e-3, "s {s:?} g {g:?} c {center:?} r {radius}: {exact} vs {brute}");
    }
    // Both branches must be exercised.
    assert!(blocked > 100 && blocked < 900, "{blocked}");
}
