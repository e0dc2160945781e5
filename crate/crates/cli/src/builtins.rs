//! Scenarios shipped with the binary.

const BUILTINS: &[(&str, &str)] = &[
    ("ex_point", include_str!("../scenarios/ex_point.toml")),
    ("ex_tsb", include_str!("../scenarios/ex_tsb.toml")),
    ("ex_ud", include_str!("../scenarios/ex_ud.toml")),
    ("ex_ord2", include_str!("../scenarios/ex_ord2.toml")),
    ("ex1_ord2", include_str!("../scenarios/ex1_ord2.toml")),
    ("ex_sue", include_str!("../scenarios/ex_sue.toml")),
    ("ex_cp", include_str!("../scenarios/ex_cp.toml")),
    ("lem21", include_str!("../scenarios/lem21.toml")),
    ("lem22", include_str!("../scenarios/lem22.toml")),
    ("scp", include_str!("../scenarios/scp.toml")),
    ("genrel", include_str!("../scenarios/genrel.toml")),
    ("ncp_basic", include_str!("../scenarios/ncp_basic.toml")),
    ("ncp_cover", include_str!("../scenarios/ncp_cover.toml")),
    ("chern", include_str!("../scenarios/chern.toml")),
];

pub fn names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// Accepts `ex_scp` as an alias of `scp`.
pub fn text(name: &str) -> Option<&'static str> {
    let name = if name == "ex_scp" { "scp" } else { name };
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
