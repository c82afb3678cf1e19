//! Browser playground: generate a 2-D synthetic instance, run the selection
//! methods on it, and inspect the convex hull, all from a single static page.
//!
//! Everything crosses the JS boundary as JSON strings, so the page needs no
//! framework and the crate compiles natively for tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use coldstart::domain::{EmbeddingMatrix, Method};
use coldstart::error::{Error, Result};
use coldstart::harness::{gen_synthetic, MixtureSpec, NormSkewSpec};
use coldstart::hull::{exact_hull_2d, select_hull};
use coldstart::ipgraph::{build_exact_ip_graph, select_ipgs, select_max_in_degree, IpgsSearch};
use coldstart::metrics::{map_at_m, mean_ndcg_at_m, mean_precision_at_m};
use coldstart::oracle::{fav_loss_with, user_best};
use coldstart::selectors::{select_max_norm, select_submodular_greedy, select_user_expectation};

#[derive(Serialize)]
struct Point {
    x: f64,
    y: f64,
    norm: f64,
}

#[derive(Serialize)]
struct InstanceDoc {
    items: Vec<Point>,
    users: Vec<Point>,
    max_norm: f64,
}

#[derive(Serialize)]
struct SelectionDoc {
    method: &'static str,
    m: usize,
    ranked: Vec<usize>,
    scores: Vec<f64>,
    fav_loss: f64,
    fav_loss_per_user: f64,
    coverage: f64,
    precision: f64,
    map: f64,
    ndcg: f64,
}

#[derive(Serialize)]
struct CompareRowDoc {
    method: &'static str,
    fav_loss: f64,
}

#[derive(Serialize)]
struct HullDoc {
    /// Hull vertex indices in counter-clockwise walk order for drawing.
    ring: Vec<usize>,
    /// The same set sorted ascending.
    indices: Vec<usize>,
}

/// Methods the playground exposes, in display order.
const DEMO_METHODS: [Method; 6] = [
    Method::Greedy,
    Method::IpgsExact,
    Method::Hull,
    Method::MaxNorm,
    Method::MaxInDegree,
    Method::UserExpectation,
];

fn points(matrix: &EmbeddingMatrix) -> Vec<Point> {
    matrix
        .vectors()
        .map(|v| Point {
            x: v[0],
            y: v[1],
            norm: coldstart::domain::norm(v),
        })
        .collect()
}

/// Plain state behind the bindgen wrapper; testable natively.
struct State {
    items: EmbeddingMatrix,
    users: EmbeddingMatrix,
    seed: u64,
}

impl State {
    fn generate(
        n_items: usize,
        n_users: usize,
        clusters: usize,
        spread: f64,
        norm_skew: f64,
        seed: u64,
    ) -> Result<(Self, String)> {
        let mixture = MixtureSpec {
            clusters,
            center_scale: 1.0,
            spread,
        };
        let skew = NormSkewSpec { sigma: norm_skew };
        let (items, users) = gen_synthetic(n_items, n_users, 2, &mixture, &skew, seed)?;
        let doc = InstanceDoc {
            items: points(&items),
            users: points(&users),
            max_norm: items.norms().iter().cloned().fold(0.0, f64::max),
        };
        let json = serde_json::to_string(&doc).expect("serializable");
        Ok((Self { items, users, seed }, json))
    }

    fn graph_k(&self) -> usize {
        10.min(self.items.count().saturating_sub(1)).max(1)
    }

    fn run_method(&self, method: Method, m: usize) -> Result<coldstart::SelectionResult> {
        match method {
            Method::MaxNorm => select_max_norm(&self.items, m),
            Method::UserExpectation => select_user_expectation(&self.users, &self.items, m),
            Method::Greedy => select_submodular_greedy(&self.users, &self.items, m, false),
            Method::GreedyLazy => select_submodular_greedy(&self.users, &self.items, m, true),
            Method::Hull => select_hull(&self.users, &self.items, m, 1000, self.seed),
            Method::IpgsExact => select_ipgs(&self.users, &self.items, m, IpgsSearch::Exact),
            Method::MaxInDegree => {
                let graph = build_exact_ip_graph(&self.items, self.graph_k())?;
                select_max_in_degree(&self.items, m, &graph)
            }
            Method::Ipgs => {
                let graph = build_exact_ip_graph(&self.items, self.graph_k())?;
                select_ipgs(
                    &self.users,
                    &self.items,
                    m,
                    IpgsSearch::Graph {
                        graph: &graph,
                        ef: 100,
                    },
                )
            }
            Method::Exhaustive => Err(Error::invalid(
                "the exhaustive oracle is not exposed in the playground",
            )),
        }
    }

    fn select(&self, method_tag: &str, m: usize) -> Result<String> {
        let method: Method = method_tag.parse()?;
        let sel = self.run_method(method, m)?;
        let best = user_best(&self.users, &self.items);
        let loss = fav_loss_with(&best, &self.users, &self.items, sel.ranked());
        let doc = SelectionDoc {
            method: method.tag(),
            m,
            ranked: sel.ranked().to_vec(),
            scores: sel.scores().to_vec(),
            fav_loss: loss,
            fav_loss_per_user: loss / self.users.count() as f64,
            coverage: best.total - loss,
            precision: mean_precision_at_m(&self.users, &self.items, &sel, m)?,
            map: map_at_m(&self.users, &self.items, &sel, m)?,
            ndcg: mean_ndcg_at_m(&self.users, &self.items, &sel, m)?,
        };
        Ok(serde_json::to_string(&doc).expect("serializable"))
    }

    fn compare(&self, m: usize) -> Result<String> {
        let best = user_best(&self.users, &self.items);
        let mut rows = Vec::new();
        for method in DEMO_METHODS {
            let sel = self.run_method(method, m)?;
            rows.push(CompareRowDoc {
                method: method.tag(),
                fav_loss: fav_loss_with(&best, &self.users, &self.items, sel.ranked()),
            });
        }
        Ok(serde_json::to_string(&rows).expect("serializable"))
    }

    fn hull(&self) -> Result<String> {
        let hull = exact_hull_2d(&self.items)?;
        let ring = walk_ring(&self.items, &hull.indices);
        let doc = HullDoc {
            ring,
            indices: hull.indices,
        };
        Ok(serde_json::to_string(&doc).expect("serializable"))
    }
}

/// Orders hull vertices counter-clockwise around their centroid for drawing.
fn walk_ring(items: &EmbeddingMatrix, indices: &[usize]) -> Vec<usize> {
    if indices.len() <= 2 {
        return indices.to_vec();
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for &i in indices {
        cx += items.vector(i)[0];
        cy += items.vector(i)[1];
    }
    cx /= indices.len() as f64;
    cy /= indices.len() as f64;
    let mut ring = indices.to_vec();
    ring.sort_by(|&a, &b| {
        let pa = items.vector(a);
        let pb = items.vector(b);
        let ta = (pa[1] - cy).atan2(pa[0] - cx);
        let tb = (pb[1] - cy).atan2(pb[0] - cx);
        ta.partial_cmp(&tb).unwrap().then(a.cmp(&b))
    });
    ring
}

fn to_js<T>(result: Result<T>) -> std::result::Result<T, JsValue> {
    result.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// The playground session: one generated instance plus the operations the
/// page exposes on it.
#[wasm_bindgen]
pub struct Workbench {
    state: Option<State>,
}

impl Default for Workbench {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl Workbench {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Workbench {
        Workbench { state: None }
    }

    /// Generates a fresh 2-D instance and returns its points as JSON.
    /// The seed is `u32` to stay a plain JS number.
    pub fn generate(
        &mut self,
        n_items: usize,
        n_users: usize,
        clusters: usize,
        spread: f64,
        norm_skew: f64,
        seed: u32,
    ) -> std::result::Result<String, JsValue> {
        let (state, json) = to_js(State::generate(
            n_items,
            n_users,
            clusters,
            spread,
            norm_skew,
            seed as u64,
        ))?;
        self.state = Some(state);
        Ok(json)
    }

    /// Runs one method at subset size `m`; returns the ranked selection with
    /// its loss, coverage and ranking metrics as JSON.
    pub fn select(&self, method: &str, m: usize) -> std::result::Result<String, JsValue> {
        let state = self.require_state()?;
        to_js(state.select(method, m))
    }

    /// Runs every playground method at `m` and returns their losses as JSON.
    pub fn compare(&self, m: usize) -> std::result::Result<String, JsValue> {
        let state = self.require_state()?;
        to_js(state.compare(m))
    }

    /// Exact 2-D hull vertices of the current items as JSON.
    pub fn hull(&self) -> std::result::Result<String, JsValue> {
        let state = self.require_state()?;
        to_js(state.hull())
    }

    /// The method tags the page should offer, as a JSON array.
    pub fn methods(&self) -> String {
        let tags: Vec<&str> = DEMO_METHODS.iter().map(|m| m.tag()).collect();
        serde_json::to_string(&tags).expect("serializable")
    }
}

impl Workbench {
    fn require_state(&self) -> std::result::Result<&State, JsValue> {
        self.state
            .as_ref()
            .ok_or_else(|| JsValue::from_str("generate an instance first"))
    }
}
