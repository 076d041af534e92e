//! Criterion benchmarks of the simulation, estimation and IRF pipeline live in `benches/`.
