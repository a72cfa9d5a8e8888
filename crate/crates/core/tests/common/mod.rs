//! Helpers shared by integration test targets.
#![allow(dead_code)]

/// Request id, row count and levels the malformed corpus is written against.
pub const CORPUS_ID: &str = "req-7";
pub const CORPUS_ROWS: usize = 3;
pub const CORPUS_LEVELS: [f64; 2] = [0.15, 0.85];

pub const VALID_REPLY: &str =
    r#"{"id":"req-7","ok":true,"mean":[0.5,0.6,0.7],"quantiles":{"0.15":[0.4,0.5,0.6],"0.85":[0.6,0.7,0.8]}}"#;

/// Fifty replies to request `req-7` that must each be rejected as a
/// protocol violation.
pub fn malformed_replies() -> Vec<(String, String)> {
    let q = r#""quantiles":{"0.15":[0.4,0.5,0.6],"0.85":[0.6,0.7,0.8]}"#;
    let m = r#""mean":[0.5,0.6,0.7]"#;
    let with = |body: &str| format!(r#"{{"id":"req-7","ok":true,{body}}}"#);
    let mut cases: Vec<(&str, String)> = vec![
        ("empty line", String::new()),
        ("whitespace", "   ".into()),
        ("plain text", "hello".into()),
        ("json null", "null".into()),
        ("json array", "[1,2,3]".into()),
        ("json number", "42".into()),
        ("json string", "\"req-7\"".into()),
        ("empty object", "{}".into()),
        ("missing id", format!(r#"{{"ok":true,{m},{q}}}"#)),
        ("numeric id", format!(r#"{{"id":7,"ok":true,{m},{q}}}"#)),
        ("missing ok", format!(r#"{{"id":"req-7",{m},{q}}}"#)),
        ("ok as string", format!(r#"{{"id":"req-7","ok":"true",{m},{q}}}"#)),
        ("ok as number", format!(r#"{{"id":"req-7","ok":1,{m},{q}}}"#)),
        ("missing mean", with(q)),
        ("missing quantiles", with(m)),
        ("null mean", with(&format!(r#""mean":null,{q}"#))),
        ("null quantiles", with(&format!(r#"{m},"quantiles":null"#))),
        ("mean as object", with(&format!(r#""mean":{{"a":1}},{q}"#))),
        ("mean with string", with(&format!(r#""mean":[0.5,"x",0.7],{q}"#))),
        ("mean with null", with(&format!(r#""mean":[0.5,null,0.7],{q}"#))),
        ("mean too short", with(&format!(r#""mean":[0.5,0.6],{q}"#))),
        ("mean too long", with(&format!(r#""mean":[0.5,0.6,0.7,0.8],{q}"#))),
        ("mean empty", with(&format!(r#""mean":[],{q}"#))),
        ("mean overflow", with(&format!(r#""mean":[0.5,1e999,0.7],{q}"#))),
        ("quantiles as array", with(&format!(r#"{m},"quantiles":[[0.4,0.5,0.6],[0.6,0.7,0.8]]"#))),
        ("quantiles empty", with(&format!(r#"{m},"quantiles":{{}}"#))),
        ("only lower level", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.5,0.6]}}"#))),
        ("only upper level", with(&format!(r#"{m},"quantiles":{{"0.85":[0.6,0.7,0.8]}}"#))),
        ("extra level", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.5,0.6],"0.5":[0.5,0.6,0.7],"0.85":[0.6,0.7,0.8]}}"#))),
        ("wrong level", with(&format!(r#"{m},"quantiles":{{"0.1":[0.4,0.5,0.6],"0.85":[0.6,0.7,0.8]}}"#))),
        ("percent key", with(&format!(r#"{m},"quantiles":{{"15%":[0.4,0.5,0.6],"0.85":[0.6,0.7,0.8]}}"#))),
        ("word key", with(&format!(r#"{m},"quantiles":{{"lower":[0.4,0.5,0.6],"upper":[0.6,0.7,0.8]}}"#))),
        ("duplicate level spelling", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.5,0.6],"0.150":[0.4,0.5,0.6],"0.85":[0.6,0.7,0.8]}}"#))),
        ("quantile too short", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.5],"0.85":[0.6,0.7,0.8]}}"#))),
        ("quantile too long", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.5,0.6],"0.85":[0.6,0.7,0.8,0.9]}}"#))),
        ("quantile with null", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,null,0.6],"0.85":[0.6,0.7,0.8]}}"#))),
        ("quantile as scalar", with(&format!(r#"{m},"quantiles":{{"0.15":0.4,"0.85":[0.6,0.7,0.8]}}"#))),
        ("quantile overflow", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.5,0.6],"0.85":[0.6,-1e999,0.8]}}"#))),
        ("crossed quantiles", with(&format!(r#"{m},"quantiles":{{"0.15":[0.4,0.9,0.6],"0.85":[0.6,0.7,0.8]}}"#))),
        ("swapped quantiles", with(&format!(r#"{m},"quantiles":{{"0.15":[0.6,0.7,0.8],"0.85":[0.4,0.5,0.6]}}"#))),
        ("trailing garbage", format!("{VALID_REPLY} extra")),
        ("two objects", format!("{VALID_REPLY}{VALID_REPLY}")),
        ("single quotes", VALID_REPLY.replace('"', "'")),
        ("nan literal", with(&format!(r#""mean":[0.5,NaN,0.7],{q}"#))),
        ("infinity literal", with(&format!(r#""mean":[0.5,Infinity,0.7],{q}"#))),
    ];
    // truncations of the valid reply are never valid JSON
    for cut in [1, 17, 40, 71, VALID_REPLY.len() - 1] {
        cases.push(("truncated", VALID_REPLY[..cut].to_string()));
    }
    assert_eq!(cases.len(), 50);
    cases.into_iter().map(|(l, s)| (l.to_string(), s)).collect()
}

pub mod naive_features;
