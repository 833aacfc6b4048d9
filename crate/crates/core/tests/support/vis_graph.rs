//! Brute-force shortest path around a disc: the disc is replaced by a
//! circumscribed regular polygon and Dijkstra runs over its visibility
//! graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

type P = [f64; 2];

fn dist(a: P, b: P) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(o: P, a: P, b: P) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(a: P, b: P, c: P, d: P) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
    }
}

/// Polygon with `n` vertices whose edges are tangent to the disc.
pub fn polygon(center: P, radius: f64, n: usize) -> Vec<P> {
    let r = radius / (std::f64::consts::PI / n as f64).cos();
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect()
}

/// Vertex `k` of a convex counter-clockwise polygon is visible from an
/// outside point when the point lies strictly outside one of its two
/// incident edges.
fn sees(poly: &[P], k: usize, p: P) -> bool {
    let n = poly.len();
    let prev = poly[(k + n - 1) % n];
    let next = poly[(k + 1) % n];
    cross(prev, poly[k], p) < 0.0 || cross(poly[k], next, p) < 0.0
}

pub fn shortest_path(start: P, goal: P, center: P, radius: f64, n: usize) -> f64 {
    let poly = polygon(center, radius, n);
    let direct_clear = (0..n).all(|k| !segments_cross(start, goal, poly[k], poly[(k + 1) % n]));
    if direct_clear {
        return dist(start, goal);
    }
    // Nodes: polygon vertices 0..n, start n, goal n + 1.
    let (s, g) = (n, n + 1);
    let mut best = vec![f64::INFINITY; n + 2];
    let mut heap = BinaryHeap::new();
    best[s] = 0.0;
    heap.push(Item(0.0, s));
    while let Some(Item(d, u)) = heap.pop() {
        if d > best[u] {
            continue;
        }
        if u == g {
            return d;
        }
        let mut relax = |v: usize, w: f64, heap: &mut BinaryHeap<Item>| {
            if d + w < best[v] {
                best[v] = d + w;
                heap.push(Item(d + w, v));
            }
        };
        if u == s {
            for k in 0..n {
                if sees(&poly, k, start) {
                    relax(k, dist(start, poly[k]), &mut heap);
                }
            }
        } else {
            for v in [(u + 1) % n, (u + n - 1) % n] {
                relax(v, dist(poly[u], poly[v]), &mut heap);
            }
            if sees(&poly, u, goal) {
                relax(g, dist(poly[u], goal), &mut heap);
            }
        }
    }
    f64::INFINITY
}
