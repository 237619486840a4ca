//! Export of the network of timed game automata to the UPPAAL Tiga XML format.
//!
//! The subset used:
//!
//! * global declarations: `broadcast chan up`, the constants `r`, `eref`,
//!   `E`, `Delta`, the bounded integer `e` and the update function `upd`;
//! * one template `LoopN` per traffic automaton with a local `clock c`,
//!   locations `Qk` with invariant `c <= k`, controllable `early` edges
//!   (guard `c == k`) and uncontrollable `trigger` edges (guard `c == i`,
//!   `controllable="false"`), all sending `up!`, resetting `c` and updating
//!   `e`;
//! * the template `Network` with locations `Idle`, `InUse` (invariant
//!   `cN <= Delta`) and `Bad`, receiving `up?`;
//! * the safety query `control: A[] not Network.Bad and e < E`.
//!
//! A template has a single initial location; loop templates start in
//! `Q<k_min>`.

use std::fmt::Write as _;

use crate::game::{EarlinessParams, NetworkTga};
use crate::traffic::{EdgeKind, TrafficTga};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn location(out: &mut String, id: &str, name: &str, invariant: Option<String>, x: i32, y: i32) {
    let _ = writeln!(out, "    <location id=\"{id}\" x=\"{x}\" y=\"{y}\">");
    let _ = writeln!(out, "      <name>{name}</name>");
    if let Some(inv) = invariant {
        let _ = writeln!(out, "      <label kind=\"invariant\">{}</label>", escape(&inv));
    }
    let _ = writeln!(out, "    </location>");
}

fn transition(out: &mut String, controllable: bool, source: &str, target: &str, guard: Option<String>, sync: &str, assign: Option<String>) {
    if controllable {
        let _ = writeln!(out, "    <transition>");
    } else {
        let _ = writeln!(out, "    <transition controllable=\"false\">");
    }
    let _ = writeln!(out, "      <source ref=\"{source}\"/>");
    let _ = writeln!(out, "      <target ref=\"{target}\"/>");
    if let Some(g) = guard {
        let _ = writeln!(out, "      <label kind=\"guard\">{}</label>", escape(&g));
    }
    if !sync.is_empty() {
        let _ = writeln!(out, "      <label kind=\"synchronisation\">{sync}</label>");
    }
    if let Some(a) = assign {
        let _ = writeln!(out, "      <label kind=\"assignment\">{}</label>", escape(&a));
    }
    let _ = writeln!(out, "    </transition>");
}

pub fn export_uppaal(tgas: &[TrafficTga], net: &NetworkTga, params: &EarlinessParams) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    out.push_str(
        "<!DOCTYPE nta PUBLIC '-//Uppaal Team//DTD Flat System 1.1//EN' \
         'http://www.it.uu.se/research/group/darts/uppaal/flat-1_2.dtd'>\n",
    );
    out.push_str("<nta>\n");
    let decl = format!(
        "broadcast chan up;\n\
         const int r = {r};\n\
         const int eref = {eref};\n\
         const int E = {bound};\n\
         const int Delta = {delta};\n\
         int[0,E] e = 0;\n\
         int upd(int ev, int i, int k) {{\n\
         \x20   int v = ev + r * (i - k) - eref;\n\
         \x20   if (v < 0) return 0;\n\
         \x20   if (v > E) return E;\n\
         \x20   return v;\n\
         }}",
        r = params.r,
        eref = params.e_ref,
        bound = params.bound,
        delta = net.delta
    );
    let _ = writeln!(out, "  <declaration>{}</declaration>", escape(&decl));

    let mut names = Vec::new();
    for tga in tgas {
        let name = format!("Loop{}", tga.loop_id);
        let loc_id = |q: usize| format!("l{}_q{q}", tga.loop_id);
        let _ = writeln!(out, "  <template>\n    <name>{name}</name>\n    <declaration>clock c;</declaration>");
        for (pos, &q) in tga.locations.iter().enumerate() {
            location(&mut out, &loc_id(q), &format!("Q{q}"), Some(format!("c <= {}", tga.invariant(q))), 200 * pos as i32, 0);
        }
        if let Some(&first) = tga.locations.first() {
            let _ = writeln!(out, "    <init ref=\"{}\"/>", loc_id(first));
        }
        for e in &tga.edges {
            transition(
                &mut out,
                e.kind == EdgeKind::Controllable,
                &loc_id(e.source),
                &loc_id(e.target),
                Some(format!("c == {}", e.guard)),
                "up!",
                Some(format!("c = 0, e = upd(e, {}, {})", e.source, e.guard)),
            );
        }
        out.push_str("  </template>\n");
        names.push(name);
    }

    out.push_str("  <template>\n    <name>Network</name>\n    <declaration>clock cN;</declaration>\n");
    location(&mut out, "net_idle", "Idle", None, 0, 0);
    location(&mut out, "net_inuse", "InUse", Some("cN <= Delta".into()), 200, 0);
    location(&mut out, "net_bad", "Bad", None, 400, 0);
    out.push_str("    <init ref=\"net_idle\"/>\n");
    transition(&mut out, false, "net_idle", "net_inuse", None, "up?", Some("cN = 0".into()));
    transition(&mut out, false, "net_inuse", "net_idle", Some("cN == Delta".into()), "", None);
    transition(&mut out, false, "net_inuse", "net_bad", None, "up?", None);
    transition(&mut out, false, "net_bad", "net_bad", None, "up?", None);
    out.push_str("  </template>\n");
    names.push("Network".into());

    let _ = writeln!(out, "  <system>system {};</system>", names.join(", "));
    out.push_str("  <queries>\n    <query>\n");
    let _ = writeln!(out, "      <formula>{}</formula>", escape("control: A[] not Network.Bad and e < E"));
    out.push_str("      <comment>safe scheduler</comment>\n    </query>\n  </queries>\n");
    out.push_str("</nta>\n");
    out
}
