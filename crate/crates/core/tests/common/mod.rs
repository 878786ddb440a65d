#![allow(dead_code)]

pub mod grad;
pub mod mdp;
pub mod oracle;
