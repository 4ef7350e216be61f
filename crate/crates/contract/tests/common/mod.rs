//! Contract tests share the workspace-wide test instruments.

#![allow(unused_imports)]

pub use bdsas_testkit::*;
