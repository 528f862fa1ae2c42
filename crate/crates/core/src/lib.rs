pub mod agents;
pub mod evalcli;
pub mod mapgen;
pub mod numerics;
pub mod trainer;
pub mod worldsim;
pub mod obs;
