//! Holds the `acceptance` test target, which prints one PASS or FAIL line
//! per check and exits nonzero if any check fails.
