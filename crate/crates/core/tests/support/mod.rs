#![allow(dead_code)]

pub mod grad_oracle;
pub mod vis_graph;
