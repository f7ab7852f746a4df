//! Task and motion planning over networks of augmented AND/OR graphs.
//!
//! A task is encoded as an AND/OR graph whose leaves are facts about the
//! world and whose root is the goal of the current stage. Graph Net Search
//! walks the graph, grounds the cheapest feasible hyper-arc into motion
//! queries against a simulated planar world, and chains a fresh graph onto
//! the network whenever a stage completes or a motion fails. The length of
//! that chain is the depth metric `d`.
//!
//! The modules, bottom-up:
//!
//! - [`andor_graph`]: nodes, hyper-arcs, solved/cost propagation, augmentation.
//! - [`domain`]: facts, action templates, the symbolic transition function.
//! - [`world`]: the 2D world, grid motion planner, obstructor diagnosis.
//! - [`dsl`]: the `.scn` scenario format.
//! - [`search`]: graph networks and Graph Net Search.
//! - [`interface`]: grounding symbolic actions and dispatching motion queries.
//! - [`planner`]: the top-level loop, traces and metrics.
//! - [`bench`]: the Hanoi and Habitat scenario generators.

pub mod andor_graph;
pub mod bench;
pub mod domain;
pub mod dsl;
pub mod interface;
pub mod planner;
pub mod search;
pub mod world;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/andor-graphs.md")]
    mod andor_graphs {}
    #[doc = include_str!("../../../book/src/graph-networks.md")]
    mod graph_networks {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/grounding.md")]
    mod grounding {}
    #[doc = include_str!("../../../book/src/planner-loop.md")]
    mod planner_loop {}
    #[doc = include_str!("../../../book/src/scenario-format.md")]
    mod scenario_format {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
