//! Built-in scenarios, runnable by name.

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        /// `(name, file text)`; the first line of each file is a comment
        /// describing it.
        pub const ALL: &[(&str, &str)] = &[$(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*];
    };
}

builtin!("pair_clean", "tcp_lossy", "homa_vs_tcp", "quic_hol", "rto_backoff", "homa_contention");

pub fn get(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
