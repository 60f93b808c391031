//! Hosts the `acceptance` test target. Run it with `cargo test -p lumistack-validation`
//! after the workspace binaries are built (`cargo test --workspace` does both).
