//! Holds the `acceptance` integration test, which builds and checks complete
//! runs with pinned tolerances. The package exports nothing.
