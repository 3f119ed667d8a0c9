//! The fixture benchmark: one scripted model behaviour per case, plus the
//! hand-counted outcome the harness must reproduce.

use jarvis_cli::eval::{BenchmarkCase, Tier};

use super::scenarios::*;

pub struct BenchEntry {
    pub case: BenchmarkCase,
    pub model: Case,
    /// Hand-counted verdict, with the reason.
    pub passes: bool,
    pub why: &'static str,
}

fn entry(id: &str, tier: Tier, required: &[&str], model: Case, passes: bool, why: &'static str) -> BenchEntry {
    BenchEntry {
        case: BenchmarkCase {
            id: id.into(),
            question: model.query.clone(),
            required_apis: required.iter().map(|s| s.to_string()).collect(),
            tier,
        },
        model,
        passes,
        why,
    }
}

const PIN_INDEX: &str = include_str!("../../../../fixtures/scripts/pin_index.esl");

pub fn entries() -> Vec<BenchEntry> {
    use Tier::*;
    vec![
        entry(
            "easy-route-length-path",
            Easy,
            &["pin().net().route_length()"],
            route_length_case(),
            true,
            "shortest-path hint fixes the hallucinated Node.route_length in one iteration",
        ),
        entry(
            "easy-leakage-rule",
            Easy,
            &["calculate_power()", "power(\"is_leakage\")"],
            leakage_case(),
            true,
            "power rule rewrites the leakage attribute into the flag form",
        ),
        entry(
            "easy-sixth-pin",
            Easy,
            &["get_all_pins()"],
            Case::new("Write a code to return the sixth pin of the design", PIN_INDEX),
            true,
            "initial code is clean",
        ),
        entry(
            "easy-pin-names",
            Easy,
            &["get_all_pins()", ".name()"],
            Case::new(
                "Write a code to print the name of every pin",
                "for pin in get_all_pins():\n    print(pin.name())\n",
            ),
            true,
            "initial code is clean",
        ),
        entry(
            "easy-count-setup",
            Easy,
            &["is_setup_vio()"],
            Case::new(
                "Write a code to count the setup violations",
                "count = 0\nfor vio in get_all_violations():\n    if vio.is_setup_vio():\n        count += 1\nprint(count)\n",
            ),
            true,
            "initial code is clean",
        ),
        entry(
            "easy-pin-fanout",
            Easy,
            &["net().fanout()"],
            Case::new(
                "Write a code to print the fanout of the net of every pin",
                "for pin in get_all_pins():\n    print(pin.fanout())\n",
            )
            .fix("fanout", "n = pin.net().fanout()")
            .top(
                "Pin -> net -> Net -> fanout",
                "for pin in get_all_pins():\n    print(pin.net().fanout())\n",
            ),
            true,
            "path hint Pin -> net -> Net -> fanout repairs the call",
        ),
        entry(
            "easy-violation-count",
            Easy,
            &["size()"],
            Case::new(
                "Write a code to get the number of violations",
                "vios = get_all_violations()\nprint(vios.size())\n",
            ),
            true,
            "initial code is clean",
        ),
        entry(
            "easy-cell-names-offtopic",
            Easy,
            &[".name()"],
            Case::new(
                "Write a code to print the name of every cell",
                "for cell in get_cells(\"*\", \"flat\"):\n    print(cell.name())\n",
            )
            .guard("How do I list all nets?"),
            false,
            "guardrail reconstructs an unrelated question, functional score 0",
        ),
        entry(
            "easy-logic-delay-wrong-api",
            Easy,
            &["logic_delay()"],
            Case::new(
                "Write a code to print the logic delay of each violation",
                "for vio in get_all_violations():\n    print(vio.slack())\n",
            ),
            false,
            "accepted, but the required logic_delay() never appears",
        ),
        entry(
            "easy-ram-end-ref",
            Easy,
            &["get_end_ref().of_ram()", ".id()"],
            Case::new(
                "Write a code to print the id of each violation that ends at a RAM",
                "for vio in get_all_violations():\n    if vio.get_end_pin().of_ram():\n        print(vio.id())\n",
            )
            .fix("of_ram", "is_ram = vio.get_end_ref().of_ram()")
            .top(
                "get_end_ref().of_ram()",
                "for vio in get_all_violations():\n    if vio.get_end_ref().of_ram():\n        print(vio.id())\n",
            ),
            true,
            "no path from Pin reaches of_ram; the fixer snippet supplies get_end_ref",
        ),
        entry(
            "medium-worst-slack-ram",
            Medium,
            &["sort_using_slack()", ".id()", "push_back("],
            worst_slack_case(),
            true,
            "sort rule, fixer snippet and top agent together reach the sorted form",
        ),
        entry(
            "medium-dynamic-power",
            Medium,
            &["calculate_power()", "power(\"is_dynamic\")"],
            Case::new(
                "Write a code to compute the total dynamic power of all cells",
                "total = 0\nfor cell in get_cells(\"*\", \"flat\"):\n    total += cell.dynamic_power()\nprint(total)\n",
            )
            .enforce(
                "cell.dynamic_power()",
                "total = 0\nfor cell in get_cells(\"*\", \"flat\"):\n    cell.calculate_power()\n    total += cell.power(\"is_dynamic\")\nprint(total)\n",
            ),
            true,
            "power rule rewrite",
        ),
        entry(
            "medium-long-nets-unhelpful",
            Medium,
            &["route_length()"],
            Case::new(
                "Write a code to print the pin name of nodes whose route length exceeds 100",
                "for node in nodes:\n    if node.route_length() > 100:\n        print(node.pin_name())\n",
            ),
            false,
            "models never improve the script; both episodes exhaust the iteration limit",
        ),
        entry(
            "medium-node-route-second-episode",
            Medium,
            &["pin().net().route_length()"],
            Case::new(
                "Write a code to print the route length of the net of each node",
                "for node in nodes:\n    print(node.net().route_length())\n",
            )
            .top("# Progress so far", "for node in nodes:\n    print(node.pin().net().route_length())\n"),
            true,
            "top agent only repairs once given the first episode's summary",
        ),
        entry(
            "medium-switching-flag",
            Medium,
            &["power(\"is_switching\")"],
            Case::new(
                "Write a code to compute the total switching power of sequential cells",
                "total = 0\nfor cell in get_cells(\"*\", \"hierarchical\"):\n    if cell.is_sequential():\n        cell.calculate_power()\n        total += cell.power(\"switching\")\n",
            )
            .enforce(
                "power(\"switching\")",
                "total = 0\nfor cell in get_cells(\"*\", \"hierarchical\"):\n    if cell.is_sequential():\n        cell.calculate_power()\n        total += cell.power(\"is_switching\")\n",
            ),
            true,
            "invalid flag literal corrected by the power rule",
        ),
        entry(
            "medium-end-ref-name-prose",
            Medium,
            &["get_end_ref().name()"],
            Case::new(
                "Write a code to print the reference name at the end point of each violation",
                "for vio in get_all_violations():\n    print(vio.get_end_pin().ref_name())\n",
            )
            .top("# Question", "I could not find that API."),
            false,
            "top agent answers in prose; the script never changes",
        ),
        entry(
            "hard-worst-ram-slack-partial",
            Hard,
            &["of_ram()", "sort_using_slack()"],
            Case::new(
                "Write a code to get the worst slack among setup violations that end at a RAM",
                "worst = get_all_violations().sort_using_slack()[0]\nprint(worst.slack())\n",
            ),
            false,
            "accepted, but the RAM filter of_ram() is missing",
        ),
        entry(
            "hard-ram-vios-sorted",
            Hard,
            &["get_end_ref().of_ram()", "sort_using_slack()", "push_back("],
            Case::new(
                "Write a code to list the ids of violations ending at a RAM reference, sorted by slack",
                "ram_vios = Violations()\nfor vio in get_all_violations():\n    if vio.get_end_ref().of_ram():\n        ram_vios.push_back(vio)\nfor vio in ram_vios.sort_using_slack():\n    print(vio.id())\n",
            ),
            true,
            "initial code is clean",
        ),
        entry(
            "hard-clock-skew-no-code",
            Hard,
            &["skew"],
            Case::new("Write a code to report the clock skew of each flop", "Sorry, I cannot write that."),
            false,
            "generator reply contains no code",
        ),
        entry(
            "hard-port-logic-delay",
            Hard,
            &["is_port()", "logic_delay()"],
            Case::new(
                "Write a code to sum the logic delay of violations ending at a top level port",
                "total = 0\nfor vio in get_all_violations():\n    if vio.get_end_pin().is_port():\n        total += vio.logic_delay()\nprint(total)\n",
            ),
            true,
            "initial code is clean",
        ),
    ]
}

pub const BENCH_FILE: &str = "fixtures/bench/cases.jsonl";
pub const REPLAY_FILE: &str = "fixtures/bench/replay.jsonl";
