//! Synthetic inputs for the benchmarks, sized by a single knob so runs at
//! different scales are comparable.

use scram_core::runtime::{EnvDelta, EnvMap};

/// A tool document with `versions` blocks shaped like a typical library
/// description: client variables, a library, an external and a runtime path.
pub fn tool_doc(versions: usize) -> String {
    let mut doc = String::from("<doc type=BuildSystem::ToolDoc version=1.0>\n");
    for v in 0..versions {
        doc.push_str(&format!(
            "<Tool name=Widget version=1.{v}.0>\n\
             <info url=http://widgets.example.org></info>\n\
             <Lib name=widget>\n\
             <Client>\n\
             <Environment name=WIDGET_BASE>\n  Where widgets live.\n</Environment>\n\
             <Environment name=LIBDIR type=lib></Environment>\n\
             </Client>\n\
             <External ref=sockets version=1.0>\nNeeds sockets\n</External>\n\
             <Environment name=LD_LIBRARY_PATH value=$LIBDIR type=Runtime_path></Environment>\n\
             </Tool>\n"
        ));
    }
    doc
}

/// A configuration with `tools` requires, each pinned once unscoped and
/// once for each of two architecture scopes.
pub fn configuration_doc(tools: usize) -> String {
    let mut doc = String::from("<doc type=BuildSystem::Configuration version=1.0>\n");
    for scope in ["Linux__2", "Linux__2.4"] {
        doc.push_str(&format!("<Architecture name={scope}>\n"));
        for t in 0..tools {
            doc.push_str(&format!(
                "<require name=tool{t} version={t}.1 url=\"cvs:?module=Tools/tool{t}\">\n"
            ));
        }
        doc.push_str("</Architecture>\n");
    }
    for t in 0..tools {
        doc.push_str(&format!(
            "<require name=tool{t} version={t}.0 url=\"cvs:?module=Tools/tool{t}\">\n"
        ));
    }
    doc
}

/// A requirements document selecting every tool of [`configuration_doc`].
pub fn requirements_doc(tools: usize) -> String {
    let mut doc = String::from("<doc type=BuildSystem::Requirements version=2.0>\n");
    for t in 0..tools {
        doc.push_str(&format!("<select name=tool{t}>\n"));
    }
    doc
}

/// A delta touching `vars` variables, alternating sets and path prepends.
pub fn delta(area_id: &str, vars: usize) -> EnvDelta {
    let mut d = EnvDelta::new(area_id);
    for i in 0..vars {
        let name = format!("VAR_{i}");
        let value = format!("/opt/{area_id}/pkg {i}/lib");
        if i % 2 == 0 {
            d.set(&name, &value).expect("generated names are distinct");
        } else {
            d.prepend(&name, &value)
                .expect("generated names are distinct");
        }
    }
    d
}

/// A login environment of `vars` unrelated variables plus the usual paths.
pub fn env(vars: usize) -> EnvMap {
    let mut env: EnvMap = (0..vars)
        .map(|i| (format!("USER_{i}"), format!("value {i}")))
        .collect();
    env.insert("PATH".into(), "/usr/local/bin:/usr/bin:/bin".into());
    env.insert("LD_LIBRARY_PATH".into(), "/usr/lib".into());
    env
}
