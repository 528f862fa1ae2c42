use std::ffi::{c_char, CString};
use std::process::Command;
use std::ptr;

use memq::agents::{AgentNet, ArchConfig, Variant};
use memq::evalcli::{save_checkpoint, Manifest};
use memq::mapgen::gen_imaze;
use memq::numerics::Rng;
use memq::worldsim::{render, EpisodeState, Task};
use memq_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { memq_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn corridor_env(seed: u64) -> *mut MemqEnv {
    let text = CString::new(gen_imaze(3).unwrap().serialize()).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { memq_env_from_text(text.as_ptr(), seed, &mut env) }, MemqStatus::Ok);
    env
}

#[test]
fn observations_match_the_library_renderer() {
    let env = corridor_env(3);
    let mut buf = vec![0u8; MEMQ_OBS_LEN];
    assert_eq!(unsafe { memq_env_observe(env, buf.as_mut_ptr(), buf.len()) }, MemqStatus::Ok);
    let state = EpisodeState::reset(&gen_imaze(3).unwrap(), &mut Rng::new(3)).unwrap();
    assert_eq!(buf, render(&state).data());
    unsafe { memq_env_free(env) };
}

#[test]
fn episodes_end_and_refuse_further_steps() {
    let env = corridor_env(0);
    let (mut reward, mut done) = (0.0, false);
    let mut steps = 0;
    while !done {
        // turning in place only ends by timeout
        assert_eq!(unsafe { memq_env_step(env, 0, &mut reward, &mut done) }, MemqStatus::Ok);
        steps += 1;
    }
    assert_eq!(steps, gen_imaze(3).unwrap().max_steps);
    let mut total = 0.0;
    assert_eq!(unsafe { memq_env_total_reward(env, &mut total) }, MemqStatus::Ok);
    assert!((total - reward * steps as f64).abs() < 1e-9);
    assert_eq!(unsafe { memq_env_step(env, 0, &mut reward, &mut done) }, MemqStatus::EpisodeOver);
    assert_eq!(unsafe { memq_env_reset(env) }, MemqStatus::Ok);
    assert_eq!(unsafe { memq_env_step(env, 4, &mut reward, &mut done) }, MemqStatus::Ok);
    unsafe { memq_env_free(env) };
}

#[test]
fn bad_arguments_report_status_and_message() {
    let env = corridor_env(1);
    let (mut reward, mut done) = (0.0, false);
    assert_eq!(unsafe { memq_env_step(env, 6, &mut reward, &mut done) }, MemqStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    let mut small = [0u8; 10];
    assert_eq!(unsafe { memq_env_observe(env, small.as_mut_ptr(), 10) }, MemqStatus::Shape);
    assert_eq!(unsafe { memq_env_step(ptr::null_mut(), 0, &mut reward, &mut done) }, MemqStatus::NullPointer);
    let mut out = ptr::null_mut();
    let junk = CString::new("not a map").unwrap();
    assert_eq!(unsafe { memq_env_from_text(junk.as_ptr(), 0, &mut out) }, MemqStatus::Format);
    assert!(out.is_null());
    let missing = CString::new("/nonexistent/x.map").unwrap();
    assert_eq!(unsafe { memq_env_load(missing.as_ptr(), 0, &mut out) }, MemqStatus::Io);
    let mut agent = ptr::null_mut();
    assert_eq!(unsafe { memq_agent_load(missing.as_ptr(), &mut agent) }, MemqStatus::Io);
    unsafe {
        memq_env_free(env);
        memq_env_free(ptr::null_mut());
        memq_agent_free(ptr::null_mut());
    }
}

fn write_checkpoint(variant: Variant, dir: &std::path::Path) -> (AgentNet, CString) {
    let cfg = ArchConfig {
        conv1: 4,
        conv2: 4,
        fc_dim: 8,
        embed_dim: 8,
        ..ArchConfig::full(variant, 4)
    };
    let net = AgentNet::new(cfg, &mut Rng::new(2)).unwrap();
    let path = dir.join(format!("{variant}.ckpt"));
    save_checkpoint(&net, &Manifest::for_net(&net, Task::IMaze, 0, 0), &path).unwrap();
    // checkpoints hold f32 values
    let (_, net) = memq::evalcli::load_checkpoint(&path).unwrap();
    (net, CString::new(path.to_str().unwrap()).unwrap())
}

#[test]
fn agents_stream_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (net, path) = write_checkpoint(Variant::Frmqn, dir.path());
    let mut agent = ptr::null_mut();
    assert_eq!(unsafe { memq_agent_load(path.as_ptr(), &mut agent) }, MemqStatus::Ok);
    let env = corridor_env(5);
    let mut state = net.initial_state().unwrap();
    let mut obs = vec![0u8; MEMQ_OBS_LEN];
    let mut q = [0.0f64; MEMQ_NUM_ACTIONS];
    for _ in 0..6 {
        let mut action = 0u32;
        unsafe {
            assert_eq!(memq_env_observe(env, obs.as_mut_ptr(), obs.len()), MemqStatus::Ok);
            assert_eq!(
                memq_agent_step(agent, obs.as_ptr(), obs.len(), q.as_mut_ptr(), q.len(), &mut action),
                MemqStatus::Ok
            );
        }
        let frame = memq::obs::Observation::new(3, 32, 32, obs.clone()).unwrap();
        let expect = net.step(&mut state, &frame).unwrap();
        assert_eq!(q.to_vec(), expect.q);
        assert_eq!(action as usize, memq::trainer::greedy_action(&expect.q));
        let (mut r, mut done) = (0.0, false);
        assert_eq!(unsafe { memq_env_step(env, action, &mut r, &mut done) }, MemqStatus::Ok);
        if done {
            break;
        }
    }
    assert_eq!(unsafe { memq_agent_reset(agent) }, MemqStatus::Ok);
    let mut action = 0;
    assert_eq!(
        unsafe { memq_agent_step(agent, obs.as_ptr(), obs.len(), ptr::null_mut(), 0, &mut action) },
        MemqStatus::Ok
    );
    assert_eq!(
        unsafe { memq_agent_step(agent, obs.as_ptr(), obs.len(), q.as_mut_ptr(), 2, &mut action) },
        MemqStatus::Shape
    );
    unsafe {
        memq_agent_free(agent);
        memq_env_free(env);
    }

    let (_, dqn) = write_checkpoint(Variant::Dqn, dir.path());
    let mut agent = ptr::null_mut();
    assert_eq!(unsafe { memq_agent_load(dqn.as_ptr(), &mut agent) }, MemqStatus::InvalidArgument);
    assert!(agent.is_null());
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/memq.h");
    let dir = tempfile::tempdir().unwrap();
    for (compiler, file) in [("cc", "probe.c"), ("c++", "probe.cpp")] {
        if Command::new(compiler).arg("--version").output().is_err() {
            eprintln!("{compiler} not found; skipping");
            continue;
        }
        let src = dir.path().join(file);
        std::fs::write(
            &src,
            format!(
                "#include \"{header}\"\nint main(void) {{ MemqStatus s = MEMQ_STATUS_OK; (void)s; return MEMQ_OBS_LEN == 3072 ? 0 : 1; }}\n"
            ),
        )
        .unwrap();
        let status = Command::new(compiler).arg("-fsyntax-only").arg(&src).status().unwrap();
        assert!(status.success(), "{compiler} rejected the header");
    }
}
