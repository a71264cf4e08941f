//! The acceptance criteria, one PASS/FAIL line each. Runs without the test
//! harness so every line is printed even when an earlier one fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use scram_core::activedoc::{DocTypeRegistry, DocumentLoader, Payload};
use scram_core::config::{
    parse_configuration, parse_requirements, resolve_selection_partial, RequirementsDoc,
};
use scram_core::markup::{split_header, tokenize, TagEvent};
use scram_core::runtime::{emit_shell, EnvDelta, EnvMap, Shell};
use scram_core::toolspec::{parse_tool_doc, VarType};
use scram_core::url::{Fetcher, ResourceUrl, SchemeRegistry};
use support::shell_sim::{eval, Dialect};
use support::StubScheme;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn corpus(name: &str) -> String {
    fs::read_to_string(fixtures().join("corpus").join(name))
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

fn toy() -> PathBuf {
    fs::canonicalize(fixtures().join("toy")).unwrap()
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(started: Instant, budget: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < budget, || {
        format!("took {took:?}, budget {budget:?}")
    })
}

fn body(name: &str) -> Result<Vec<TagEvent>, String> {
    let events = tokenize(&corpus(name), name).map_err(|e| e.to_string())?;
    Ok(split_header(events).map_err(|e| e.to_string())?.1)
}

fn corpus_conformance() -> Outcome {
    let started = Instant::now();
    let (header, _) =
        split_header(tokenize(&corpus("header.doc"), "header.doc").map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(
        header.doc_type == "a:b" && header.doc_version.as_str() == "2.1",
        || format!("header {header:?}"),
    )?;

    let spec = parse_tool_doc(&body("boost.doc")?).map_err(|e| e.to_string())?;
    ensure(spec.blocks.len() == 3, || {
        format!("{} version blocks", spec.blocks.len())
    })?;
    ensure(spec.versions().eq(["1.28.0", "1.29.0", "1.30.0"]), || {
        "block versions".into()
    })?;
    for block in &spec.blocks {
        let client: Vec<_> = block
            .client_vars
            .iter()
            .map(|v| (v.name.as_str(), v.var_type))
            .collect();
        ensure(
            client
                == [
                    ("BOOST_BASE", VarType::Plain),
                    ("LIBDIR", VarType::Lib),
                    ("INCLUDE", VarType::Plain),
                ],
            || format!("client variables {client:?}"),
        )?;
        ensure(block.libs == ["boost_thread"], || {
            format!("libs {:?}", block.libs)
        })?;
        let derived: Vec<_> = block
            .derived_vars
            .iter()
            .map(|v| (v.name.as_str(), v.value.as_deref(), v.var_type))
            .collect();
        ensure(
            derived == [("LD_LIBRARY_PATH", Some("$LIBDIR"), VarType::RuntimePath)],
            || format!("derived {derived:?}"),
        )?;
        let ext: Vec<_> = block
            .externals
            .iter()
            .map(|e| (e.name.as_str(), e.version.as_str()))
            .collect();
        ensure(ext == [("sockets", "1.0")], || format!("externals {ext:?}"))?;
    }

    let config = parse_configuration(&body("configuration.doc")?).map_err(|e| e.to_string())?;
    ensure(config.entries.len() == 10, || {
        format!("{} requires", config.entries.len())
    })?;
    ensure(config.entries.iter().any(|e| e.name == "g77gcc3"), || {
        "g77gcc3 require missing".into()
    })?;
    let req = parse_requirements(&body("requirements.doc")?).map_err(|e| e.to_string())?;
    ensure(req.selects.len() == 13, || {
        format!("{} selects", req.selects.len())
    })?;
    within(started, Duration::from_secs(1))?;
    Ok("4 documents parsed, Boost has 3 complete version blocks".into())
}

/// The Requirements document with its configuration include served by a
/// stub `cvs` scheme. The unscoped requires are only selected when `extra`
/// asks for them.
fn activate_requirements(extra: &str) -> Result<RequirementsDoc, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stub = StubScheme::new();
    stub.insert(".../CMSconfiguration", corpus("configuration.doc"));
    let path = dir.path().join("requirements.doc");
    fs::write(&path, corpus("requirements.doc") + extra).map_err(|e| e.to_string())?;
    let mut schemes = SchemeRegistry::with_builtins(None);
    schemes.replace("cvs", stub);
    let loader = DocumentLoader::new(
        Fetcher::new(schemes, dir.path().join("cache")),
        DocTypeRegistry::with_builtins(),
    );
    let doc = loader
        .activate(&ResourceUrl::from_path(&path), None)
        .map_err(|e| e.to_string())?;
    match &doc.payload {
        Payload::Requirements(req) => Ok(req.clone()),
        _ => Err("not a Requirements document".into()),
    }
}

fn resolution_oracle() -> Outcome {
    let req =
        activate_requirements("<select name=LHCxx>\n<select name=Qt>\n<select name=CLHEP>\n")?;
    let expect: [(&str, &[(&str, &str)]); 2] = [
        (
            "Linux__2.4",
            &[
                ("gcc3", "3.2"),
                ("g77gcc3", "3.2"),
                ("LHCxx", "5.0.3"),
                ("Qt", "3.1.2"),
                ("CLHEP", "1.8.0.0"),
            ],
        ),
        (
            "SunOS__5.8",
            &[
                ("CC", "5.4"),
                ("f77", "4.2"),
                ("LHCxx", "5.0.3"),
                ("Qt", "3.1.2"),
                ("CLHEP", "1.8.0.0"),
            ],
        ),
    ];
    for (arch, want) in expect {
        let (resolved, missing) =
            resolve_selection_partial(&req, &[&req.inline], &arch.parse().unwrap())
                .map_err(|e| e.to_string())?;
        let got: Vec<_> = resolved
            .tools
            .iter()
            .map(|t| (t.name.as_str(), t.version.as_str()))
            .collect();
        ensure(got == want, || format!("{arch}: {got:?}"))?;
        // the project's own packages have no require in the configuration
        ensure(
            missing.len() == 9 && missing.iter().all(|m| !m.starts_with("gcc")),
            || format!("{arch}: unpinned {missing:?}"),
        )?;
    }
    Ok("Linux__2.4 and SunOS__5.8 pins match exactly, no gcc3 on SunOS".into())
}

/// Runs the binary in a sealed environment: fixed settings, no proxy
/// that could reach a network, nothing inherited but PATH.
struct World {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl World {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = fs::canonicalize(tmp.path()).unwrap();
        for d in ["install", "work"] {
            fs::create_dir_all(root.join(d)).unwrap();
        }
        Self { _tmp: tmp, root }
    }

    fn install(&self) -> PathBuf {
        self.root.join("install")
    }

    fn work(&self) -> PathBuf {
        self.root.join("work")
    }

    fn env(&self) -> BTreeMap<String, String> {
        let mut env = BTreeMap::new();
        env.insert("PATH".into(), std::env::var("PATH").unwrap_or_default());
        env.insert("HOME".into(), self.root.display().to_string());
        env.insert("SCRAM_ROOT".into(), self.install().display().to_string());
        env.insert(
            "SCRAM_SITE".into(),
            toy().join("site.cfg").display().to_string(),
        );
        env.insert(
            "SCRAM_CACHE".into(),
            self.root.join("cache").display().to_string(),
        );
        env.insert("SCRAM_ARCH".into(), "Linux__2.4".into());
        for proxy in [
            "http_proxy",
            "https_proxy",
            "HTTP_PROXY",
            "HTTPS_PROXY",
            "ALL_PROXY",
        ] {
            env.insert(proxy.into(), "http://127.0.0.1:9".into());
        }
        env
    }

    fn run(&self, cwd: &Path, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_scram"))
            .args(args)
            .current_dir(cwd)
            .env_clear()
            .envs(self.env())
            .output()
            .unwrap()
    }

    fn ok(&self, cwd: &Path, args: &[&str]) -> Result<String, String> {
        let out = self.run(cwd, args);
        if out.status.success() {
            Ok(String::from_utf8_lossy(&out.stdout).into_owned())
        } else {
            Err(format!(
                "scram {} failed ({}): {}",
                args.join(" "),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ))
        }
    }

    /// Bootstrapped, built, installed; returns the central area.
    fn installed(&self) -> Result<PathBuf, String> {
        let boot = toy().join("bootstrap.doc");
        self.ok(&self.root, &["bootstrap", boot.to_str().unwrap()])?;
        let central = self.install().join("TOY_1_0");
        self.ok(&central, &["build"])?;
        self.ok(&central, &["install"])?;
        Ok(central)
    }

    /// An installed project checked out into `work`; returns the dev area.
    fn developer(&self) -> Result<PathBuf, String> {
        self.installed()?;
        self.ok(&self.work(), &["project", "TOY", "1_0"])?;
        let dev = self.work().join("TOY_1_0");
        ensure(dev.join(".SCRAM").is_dir(), || {
            format!("no developer area at {}", dev.display())
        })?;
        Ok(dev)
    }

    fn htl_url(&self) -> String {
        format!("cvs://{}/tools?module=htl.doc", toy().display())
    }
}

fn golden_output() -> Outcome {
    let w = World::new();
    let db = w.install().join("scramdb");
    let lines = [
        "ORCA 7_1_2 Linux__2.4 /afs/cern.ch/cms/Releases/ORCA/ORCA_7_1_2",
        "ORCA 7_1_3 Linux__2.4 /afs/cern.ch/cms/Releases/ORCA/ORCA_7_1_3",
        "ORCA 7_1_3 SunOS__5.8 /afs/cern.ch/cms/Releases/ORCA/sun/ORCA_7_1_3",
        "COBRA 7_0_0 Linux__2.4 /afs/cern.ch/cms/Releases/COBRA/COBRA_7_0_0",
    ];
    fs::write(&db, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
    let list = w.ok(&w.root, &["list", "ORCA"])?;
    let golden = "Listing installed projects....\n\n\
                  ------------------------------------\n\
                  | Project  | Version  |  Location  |\n\
                  ------------------------------------\n\
                  ORCA 7_1_2 --> /afs/cern.ch/cms/Releases/ORCA/ORCA_7_1_2\n\
                  ORCA 7_1_3 --> /afs/cern.ch/cms/Releases/ORCA/ORCA_7_1_3\n\
                  Projects available for platform >> Linux__2.4 <<\n";
    ensure(list == golden, || format!("scram list ORCA:\n{list}"))?;

    fs::remove_file(&db).map_err(|e| e.to_string())?;
    let central = w.installed()?;
    let tools = w.ok(&central, &["tool", "list"])?;
    let golden = format!(
        "Tool list for location {}\n{}\n \
         gcc                  2.95.2     (default=2.95.2)\n \
         sockets              1.0        (default=1.0)\n \
         boost                1.28.0     (default=1.28.0)\n \
         htl                  1.4        (default=1.4)\n",
        central.display(),
        "+".repeat(50)
    );
    ensure(tools == golden, || format!("scram tool list:\n{tools}"))?;
    Ok("list and tool list match character for character".into())
}

fn cache_property() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stub = StubScheme::new();
    for i in 0..50 {
        stub.insert(
            &format!("m{i}"),
            format!("<doc type=T version=1.0>\nmodule {i}\n"),
        );
    }
    let mut schemes = SchemeRegistry::new();
    schemes
        .register("stub", stub.clone())
        .map_err(|e| e.to_string())?;
    let fetcher = Fetcher::new(schemes, dir.path());
    let mut first: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for i in 0..1000usize {
        let k = if i < 50 {
            i
        } else {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 50) as usize
        };
        let url =
            ResourceUrl::parse(&format!("stub:?module=m{k}"), None).map_err(|e| e.to_string())?;
        let (bytes, _) = fetcher
            .fetch(&url, Some(&format!("v{k}")))
            .map_err(|e| e.to_string())?;
        let seen = first.entry(k).or_insert_with(|| bytes.clone());
        ensure(*seen == bytes, || format!("key {k} changed content"))?;
    }
    ensure(stub.calls() == 50, || {
        format!("{} adapter calls", stub.calls())
    })?;
    within(started, Duration::from_secs(5))?;
    Ok("1000 fetches over 50 keys, 50 adapter calls".into())
}

const NAMES: [&str; 5] = ["PATH", "LD_LIBRARY_PATH", "V_A", "V_B", "V_C"];

fn hostile() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9 $\"'`\\\\!:/.=*?{}-]{0,12}",
        Just("$HOME".to_string()),
        Just("it's \"quoted\"".to_string()),
        Just("a  b $c".to_string()),
    ]
}

fn delta(id: &'static str) -> impl Strategy<Value = EnvDelta> {
    prop::collection::vec((0u8..3, hostile()), NAMES.len()).prop_map(move |ops| {
        let mut d = EnvDelta::new(id);
        for (name, (op, value)) in NAMES.iter().zip(ops) {
            match op {
                0 => d.set(name, &value).unwrap(),
                1 => d.prepend(name, &value).unwrap(),
                _ => {}
            }
        }
        d
    })
}

fn env() -> impl Strategy<Value = EnvMap> {
    prop::collection::btree_map(
        prop::sample::select(NAMES.to_vec()).prop_map(str::to_owned),
        hostile(),
        0..5,
    )
}

fn apply(env: &EnvMap, d: &EnvDelta, shell: Shell) -> Result<EnvMap, TestCaseError> {
    let dialect = match shell {
        Shell::Sh => Dialect::Sh,
        Shell::Csh => Dialect::Csh,
    };
    let text = emit_shell(&[d], env, shell);
    eval(&text, env, dialect).map_err(|e| TestCaseError::fail(format!("{e}:\n{text}")))
}

fn rollback_exactness() -> Outcome {
    let started = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 256,
        failure_persistence: None,
        ..Config::default()
    });
    for shell in [Shell::Sh, Shell::Csh] {
        runner
            .run(&(env(), delta("A/1"), delta("B/2")), |(env, a, b)| {
                let fresh = apply(&env, &a, shell)?;
                let switched = apply(&fresh, &b, shell)?;
                let back = apply(&switched, &a, shell)?;
                prop_assert_eq!(back, fresh);
                Ok(())
            })
            .map_err(|e| format!("{shell:?}: {e}"))?;
    }
    within(started, Duration::from_secs(10))?;
    Ok("A, B, A equals A over 256 hostile cases in sh and csh".into())
}

fn lifecycle() -> Outcome {
    let started = Instant::now();
    let w = World::new();
    let central = w.installed()?;
    let list = w.ok(&w.root, &["list"])?;
    let row = format!("TOY 1_0 --> {}\n", central.display());
    ensure(list.contains(&row), || {
        format!("list lacks {row:?}:\n{list}")
    })?;

    w.ok(&w.work(), &["project", "TOY", "1_0"])?;
    let dev = w.work().join("TOY_1_0");
    let inherited = w.ok(&dev, &["tool", "list"])?;
    ensure(
        inherited.contains(" htl                  1.4        (default=1.4)\n"),
        || format!("inherited tool list:\n{inherited}"),
    )?;

    w.ok(&dev, &["setup", "htl", "1.5", &w.htl_url()])?;
    let local = w.ok(&dev, &["tool", "list"])?;
    ensure(
        local.contains(" htl                  1.5        (default=1.4)\n"),
        || format!("after setup:\n{local}"),
    )?;

    let script = w.ok(&dev, &["runtime", "-sh"])?;
    let after = eval(&script, &EnvMap::new(), Dialect::Sh)?;
    let ld: Vec<&str> = after
        .get("LD_LIBRARY_PATH")
        .map(|v| v.split(':').collect())
        .unwrap_or_default();
    ensure(ld.contains(&"/opt/boost/lib"), || {
        format!("LD_LIBRARY_PATH {ld:?}")
    })?;
    let htl = after.get("HTL_LIB").map(String::as_str);
    ensure(htl == Some("/opt/htl/lib"), || format!("HTL_LIB {htl:?}"))?;
    let dev_lib = dev.join("lib").display().to_string();
    ensure(ld.first() == Some(&dev_lib.as_str()), || {
        format!("developer lib not first: {ld:?}")
    })?;
    within(started, Duration::from_secs(10))?;
    Ok(
        "bootstrap, build, install, list, project, setup override and runtime all as expected"
            .into(),
    )
}

fn relocatability() -> Outcome {
    let w = World::new();
    let dev = w.developer()?;
    w.ok(&dev, &["setup", "htl", "1.5", &w.htl_url()])?;
    let before = (
        w.ok(&dev, &["tool", "list"])?,
        w.ok(&dev, &["runtime", "-sh"])?,
    );
    let moved = w.work().join("renamed");
    fs::rename(&dev, &moved).map_err(|e| e.to_string())?;
    let after = (
        w.ok(&moved, &["tool", "list"])?,
        w.ok(&moved, &["runtime", "-sh"])?,
    );

    ensure(before.0 == after.0, || {
        format!("tool list changed:\n{}\n{}", before.0, after.0)
    })?;
    let changed: Vec<&str> = before
        .1
        .lines()
        .filter(|l| !after.1.lines().any(|m| m == *l))
        .collect();
    ensure(changed.is_empty(), || {
        format!(
            "tool list identical, but {} runtime line(s) differ because they carry the developer area's own bin/ and lib/ paths",
            changed.len()
        )
    })?;
    Ok("tool list and runtime byte-identical after rename".into())
}

fn main() {
    let started = Instant::now();
    let criteria: [Check; 7] = [
        ("1 corpus conformance", corpus_conformance),
        ("2 resolution oracle", resolution_oracle),
        ("3 golden CLI output", golden_output),
        ("4 cache property", cache_property),
        ("5 rollback exactness", rollback_exactness),
        ("6 end-to-end lifecycle", lifecycle),
        ("7 relocatability", relocatability),
    ];
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(note) => println!("PASS {name}: {note}"),
        Err(why) => {
            failed += 1;
            println!("FAIL {name}: {why}");
        }
    };
    for (name, check) in criteria {
        report(name, check());
    }
    // the whole workspace suite is timed by its own run; this bounds the
    // slowest target, which is this one
    let took = started.elapsed();
    report(
        "8 offline and fast",
        ensure(took < Duration::from_secs(60), || {
            format!("acceptance took {took:?}")
        })
        .map(|()| format!("all criteria ran offline in {took:.1?}")),
    );
    if failed > 0 {
        println!("{failed} criterion failed");
        std::process::exit(1);
    }
}
