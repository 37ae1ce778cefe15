pub mod contact;
pub mod func;
pub mod manifold;
pub mod normal_form;
pub mod resonance;
pub mod lambda;
pub mod transversality;
pub mod horseshoe;
pub mod scenario;
pub mod gallery;
pub mod report;
