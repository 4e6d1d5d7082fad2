"""Command-line front end: parsing, exit codes, reports, replay."""

import hashlib
import json
from fractions import Fraction
from importlib import resources

import pytest

from specforge import DomainError
from specforge.cli.main import main
from specforge.cli.modelfile import (
    ModelFileError,
    parse_model_file,
    parse_model_text,
)
from specforge.cli.report import SCHEMA_VERSION


def data_path(name: str) -> str:
    return str(resources.files("specforge") / "data" / name)


EXAMPLE1 = data_path("example1.model")
INDEPENDENT = data_path("independent.model")
BROKEN_H2 = data_path("broken_h2.model")
EXTRACTED = data_path("extracted.model")
POTENTIAL = data_path("potential.model")

# the bundled extracted.model joint, frozen here as the oracle's input
EXTRACTED_JOINT = {
    ("a", "a", "a"): Fraction(5),
    ("a", "a", "b"): Fraction(3),
    ("a", "b", "a"): Fraction(2),
    ("a", "b", "b"): Fraction(7, 2),
    ("b", "a", "a"): Fraction(1),
    ("b", "a", "b"): Fraction(4),
    ("b", "b", "a"): Fraction(9, 2),
    ("b", "b", "b"): Fraction(6),
}


def read_rho(path) -> list[tuple[str, tuple[str, ...], str, Fraction]]:
    records = []
    for line in open(path, encoding="utf-8"):
        if line.startswith("#"):
            continue
        region, assignment, tail, value = line.split()
        records.append((region, tuple(assignment.split(",")), tail,
                        Fraction(value)))
    return records


class TestModelFileParsing:
    def test_example1_fields(self):
        model = parse_model_file(EXAMPLE1)
        assert model.name == "example1"
        assert model.sites == ("s1", "s2", "s3", "s4")
        assert model.alphabet == ("L", "H")
        assert model.tails == ("many-high", "few-high")
        assert model.kind == "tail_rule"
        assert model.cell_count() == 2**4 * 2**4 * 2

    def test_float_literal_rejected_with_location(self):
        text = "sites a b\nalphabet x y\nfree uniform\nkind joint\njoint x y 0.5\n"
        with pytest.raises(ModelFileError, match=r"bad\.model:5: .*0\.5"):
            parse_model_text(text, path="bad.model")

    def test_missing_kind_reported_at_end(self):
        with pytest.raises(ModelFileError, match="missing 'kind'"):
            parse_model_text("sites a\nalphabet x\nfree uniform\n")

    def test_unknown_directive(self):
        with pytest.raises(ModelFileError, match="unknown directive 'wat'"):
            parse_model_text("wat 3\n")

    def test_entry_arity_checked(self):
        text = ("sites a b\nalphabet x y\nfree uniform\nkind table\n"
                "entry a x default 1\n")
        with pytest.raises(ModelFileError, match="entry needs site"):
            parse_model_text(text)

    def test_pair_requires_every_ordered_pair(self):
        text = ("sites a b\nalphabet x y\nfree uniform\nkind potential\n"
                "pair a b x,x=1 y,y=1\n")
        with pytest.raises(ModelFileError, match="every ordered symbol pair"):
            parse_model_text(text)

    def test_sweep_must_be_permutation(self):
        text = ("sites a b\nalphabet x\nfree uniform\nkind tail_rule\n"
                "rule default * x=1\nsweep a a\n")
        with pytest.raises(ModelFileError, match="sweep must list every site"):
            parse_model_text(text)

    def test_options_parsed(self):
        text = ("sites a\nalphabet x\nfree uniform\nkind tail_rule\n"
                "rule default a x=1\nseed 99\ntrials 3\npermutations 6\n"
                "float_tolerance 1/100\n")
        model = parse_model_text(text)
        assert (model.seed, model.trials, model.permutations) == (99, 3, 6)
        assert model.float_tolerance == Fraction(1, 100)

    def test_realize_all_kinds(self):
        for path, kind in [(EXAMPLE1, "tail_rule"), (BROKEN_H2, "table"),
                           (EXTRACTED, "joint"), (POTENTIAL, "potential")]:
            model = parse_model_file(path)
            assert model.kind == kind
            space, family, joint = model.realize()
            assert space.universe.sites == model.sites
            assert (joint is not None) == (kind == "joint")
            cfg = next(iter(space.configurations()))
            family.density(model.sites[0], cfg)

    def test_realize_incomplete_joint_raises(self):
        text = ("sites a b\nalphabet x y\nfree uniform\nkind joint\n"
                "joint x x 1\n")
        model = parse_model_text(text)
        with pytest.raises(DomainError, match="misses assignment"):
            model.realize()

    def test_tail_rule_star_yields_per_site_rules(self):
        model = parse_model_file(EXAMPLE1)
        _, family, _ = model.realize()
        space = family.space
        for cfg in space.configurations():
            for site in space.universe:
                expected = 2 if (
                    (cfg.tail == "many-high" and cfg.symbol(site) == "L")
                    or (cfg.tail == "few-high" and cfg.symbol(site) == "H")
                ) else 0
                assert family.density(site, cfg) == expected


class TestCheckCommand:
    def test_example1_gate_passes_despite_bounded_failure(self, capsys):
        assert main(["check", EXAMPLE1]) == 0
        out = capsys.readouterr().out
        assert "PASS very_weak_positivity" in out
        assert "PASS order_consistency" in out
        assert "FAIL bounded_positivity  [informational]" in out
        assert "summary: PASS (exit 0)" in out

    def test_independent_all_pass(self, capsys):
        assert main(["check", INDEPENDENT]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_broken_h2_fails_with_witness(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["check", BROKEN_H2, "--json", str(report_path)]) == 1
        report = json.loads(report_path.read_text())
        suites = {s["name"]: s for s in report["suites"]}
        assert suites["very_weak_positivity"]["passed"] is True
        assert suites["order_consistency"]["passed"] is False
        witness = suites["order_consistency"]["witnesses"][0]
        assert witness["lhs"] != witness["rhs"]
        assert report["gate"] == ["very_weak_positivity", "order_consistency"]
        assert report["summary"] == {"exit_code": 1, "passed": False}

    def test_missing_file_is_usage_error(self, capsys):
        assert main(["check", "/nonexistent/x.model"]) == 2
        assert "cannot read model file" in capsys.readouterr().err

    def test_parse_error_is_usage_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.model"
        bad.write_text("sites a\nalphabet x\nfree uniform\nkind joint\njoint x 1.5\n")
        assert main(["check", str(bad)]) == 2
        assert f"{bad}:5:" in capsys.readouterr().err

    def test_budget_refusal(self, capsys):
        assert main(["check", EXAMPLE1, "--budget", "100"]) == 2
        err = capsys.readouterr().err
        assert "512" in err and "budget" in err

    def test_report_schema_is_versioned_and_hashed(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["check", INDEPENDENT, "--json", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert report["schema_version"] == SCHEMA_VERSION
        assert report["tool"] == "specforge"
        digest = hashlib.sha256(open(INDEPENDENT, "rb").read()).hexdigest()
        assert report["model"]["sha256"] == digest
        assert [s["name"] for s in report["suites"]] == [
            "very_weak_positivity", "order_consistency",
            "pointwise_compatibility", "uniqueness_condition",
            "bounded_positivity",
        ]


class TestConstructCommand:
    def test_example1_tables_match_closed_form(self, capsys, tmp_path):
        out = tmp_path / "ex1.rho"
        assert main(["construct", EXAMPLE1, "-o", str(out)]) == 0
        records = read_rho(out)
        sites = ("s1", "s2", "s3", "s4")
        # 15 nonempty regions x 16 assignments x 2 tails
        assert len(records) == 15 * 16 * 2
        pinned = {"many-high": "L", "few-high": "H"}
        for region, values, tail, value in records:
            members = region.split("+")
            on_region = [values[sites.index(s)] for s in members]
            expected = (Fraction(2) ** len(members)
                        if all(v == pinned[tail] for v in on_region)
                        else Fraction(0))
            assert value == expected, (region, values, tail)

    def test_rho_file_sorted_and_headed(self, capsys, tmp_path):
        out = tmp_path / "ex1.rho"
        main(["construct", EXAMPLE1, "-o", str(out)])
        lines = out.read_text().splitlines()
        assert lines[0] == "# specforge rho table v1"
        body = [line for line in lines if not line.startswith("#")]
        assert body == sorted(body)

    def test_gate_failure_writes_nothing(self, capsys, tmp_path):
        out = tmp_path / "bad.rho"
        assert main(["construct", BROKEN_H2, "-o", str(out)]) == 1
        assert not out.exists()
        assert "construction not attempted" in capsys.readouterr().out

    def test_extracted_tables_match_joint_oracle(self, capsys, tmp_path):
        out = tmp_path / "extracted.rho"
        assert main(["construct", EXTRACTED, "-o", str(out)]) == 0
        records = read_rho(out)
        sites = ("s1", "s2", "s3")
        assert len(records) == 7 * 8  # nonempty regions x assignments
        seen = 0
        for region, values, tail, value in records:
            members = region.split("+")
            indices = [sites.index(s) for s in members]
            section = Fraction(0)
            for fill_values, w in EXTRACTED_JOINT.items():
                if all(fill_values[i] == values[i]
                       for i in range(3) if i not in indices):
                    section += w
            free = Fraction(1, 2) ** len(members)
            assert value == EXTRACTED_JOINT[tuple(values)] / (section * free)
            seen += 1
        assert seen == 56

    def test_default_out_path_from_model_name(self, capsys, tmp_path,
                                              monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["construct", INDEPENDENT]) == 0
        assert (tmp_path / "independent.rho").exists()

    def test_independent_tables_all_one(self, capsys, tmp_path):
        out = tmp_path / "ind.rho"
        main(["construct", INDEPENDENT, "-o", str(out)])
        assert all(value == 1 for _, _, _, value in read_rho(out))


class TestVerifyCommand:
    def test_extracted_all_suites_pass(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["verify", EXTRACTED, "--json", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        names = [s["name"] for s in report["suites"]]
        assert names == [
            "specification_axioms", "ratio_bounds", "order_independence",
            "uniqueness_probe", "good_support",
            "measure_consistency[kernel:default]",
            "support_mass[kernel:default]", "measure_perturbations",
            "exchange_identity", "quasilocality", "roundtrip_reconstruction",
        ]
        assert all(s["passed"] for s in report["suites"])
        gated = set(report["gate"])
        assert "ratio_bounds" not in gated and "quasilocality" not in gated

    def test_selected_flags_run_only_those(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["verify", INDEPENDENT, "--axioms", "--exchange",
                     "--json", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert [s["name"] for s in report["suites"]] == [
            "specification_axioms", "ratio_bounds", "exchange_identity"]

    def test_roundtrip_needs_joint_kind(self, capsys):
        assert main(["verify", INDEPENDENT, "--roundtrip"]) == 2
        assert "kind joint" in capsys.readouterr().err

    def test_unconstructible_model_fails_with_construction_suite(
            self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["verify", BROKEN_H2, "--json", str(report_path)]) == 1
        report = json.loads(report_path.read_text())
        assert [s["name"] for s in report["suites"]] == ["construction"]
        assert report["suites"][0]["witnesses"]

    def test_perturbation_battery_details(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["verify", EXTRACTED, "--measures",
                     "--json", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        battery = {s["name"]: s for s in report["suites"]}
        data = battery["measure_perturbations"]["data"]
        assert data["performed"] == data["detected"] == 12
        assert data["skipped"] == 0
        consistency = battery["measure_consistency[kernel:default]"]["data"]
        assert consistency["in_support_class"] is True
        assert consistency["singleton_consistent"] is True
        assert consistency["fully_consistent"] is True
        assert consistency["equivalence_holds"] is True

    def test_unnormalized_free_skips_measures_by_default(
            self, capsys, tmp_path):
        model = tmp_path / "unnorm.model"
        model.write_text(
            "sites s1 s2\nalphabet a b\nfree s1 a=1 b=1\nfree s2 a=1 b=1\n"
            "kind tail_rule\nrule default * a=1 b=1\n")
        report_path = tmp_path / "report.json"
        assert main(["verify", str(model), "--json", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        names = {s["name"] for s in report["suites"]}
        assert not any(name.startswith("measure") for name in names)
        assert any("not normalized" in note for note in report["notes"])
        assert main(["verify", str(model), "--measures"]) == 2

    def test_zero_free_weight_skips_uniqueness_by_default(
            self, capsys, tmp_path):
        model = tmp_path / "zerofree.model"
        model.write_text(
            "sites s1 s2\nalphabet a b\nfree s1 a=1 b=0\nfree s2 a=1 b=0\n"
            "kind tail_rule\nrule default * a=1 b=0\n")
        assert main(["verify", str(model)]) == 0
        assert "uniqueness probe skipped" in capsys.readouterr().out
        assert main(["verify", str(model), "--uniqueness"]) == 1

    def test_example1_axioms_and_orders_pass(self, capsys):
        assert main(["verify", EXAMPLE1, "--axioms", "--orders"]) == 0


class TestDeterminismAndThreads:
    def test_reports_byte_identical_across_runs(self, capsys, tmp_path):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        main(["verify", EXTRACTED, "--json", str(first)])
        main(["verify", EXTRACTED, "--json", str(second)])
        assert first.read_bytes() == second.read_bytes()

    def test_reports_byte_identical_across_thread_counts(
            self, capsys, tmp_path, monkeypatch):
        single = tmp_path / "single.json"
        main(["verify", INDEPENDENT, "--json", str(single)])
        monkeypatch.setenv("SPECFORGE_THREADS", "4")
        threaded = tmp_path / "threaded.json"
        assert main(["verify", INDEPENDENT, "--json", str(threaded)]) == 0
        assert single.read_bytes() == threaded.read_bytes()

    def test_bad_thread_env_is_usage_error(self, capsys, monkeypatch):
        monkeypatch.setenv("SPECFORGE_THREADS", "many")
        assert main(["check", INDEPENDENT]) == 2
        assert "SPECFORGE_THREADS" in capsys.readouterr().err

    def test_rho_files_byte_identical(self, capsys, tmp_path):
        first = tmp_path / "a.rho"
        second = tmp_path / "b.rho"
        main(["construct", EXTRACTED, "-o", str(first)])
        main(["construct", EXTRACTED, "-o", str(second)])
        assert first.read_bytes() == second.read_bytes()


class TestReplayCommand:
    def test_reproduced_witness_exits_one(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        main(["check", EXAMPLE1, "--json", str(report_path)])
        code = main(["replay", str(report_path),
                     "--suite", "bounded_positivity", "--witness", "3"])
        assert code == 1
        assert "reproduced" in capsys.readouterr().out

    def test_gone_witness_exits_zero(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        main(["check", BROKEN_H2, "--json", str(report_path)])
        report = json.loads(report_path.read_text())
        for suite in report["suites"]:
            if suite["name"] == "order_consistency":
                suite["witnesses"][0]["replay"]["tail"] = "never-was"
        report_path.write_text(json.dumps(report))
        code = main(["replay", str(report_path),
                     "--suite", "order_consistency", "--witness", "0"])
        assert code == 0
        assert "no longer occurs" in capsys.readouterr().out

    def test_changed_model_is_refused(self, capsys, tmp_path):
        model = tmp_path / "copy.model"
        model.write_text(open(BROKEN_H2, encoding="utf-8").read())
        report_path = tmp_path / "report.json"
        main(["check", str(model), "--json", str(report_path)])
        model.write_text(model.read_text() + "\n# edited\n")
        code = main(["replay", str(report_path),
                     "--suite", "order_consistency"])
        assert code == 2
        assert "sha256 differs" in capsys.readouterr().err

    def test_unknown_suite_and_bad_index(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        main(["check", EXAMPLE1, "--json", str(report_path)])
        assert main(["replay", str(report_path), "--suite", "nope"]) == 2
        assert main(["replay", str(report_path),
                     "--suite", "very_weak_positivity"]) == 2

    def test_verify_suite_witness_replays(self, capsys, tmp_path):
        model = tmp_path / "zerofree.model"
        model.write_text(
            "sites s1 s2\nalphabet a b\nfree s1 a=1 b=0\nfree s2 a=1 b=0\n"
            "kind tail_rule\nrule default * a=1 b=0\n")
        report_path = tmp_path / "report.json"
        assert main(["verify", str(model), "--uniqueness",
                     "--json", str(report_path)]) == 1
        code = main(["replay", str(report_path),
                     "--suite", "uniqueness_probe", "--witness", "0"])
        assert code == 1


class TestTextRendering:
    def test_failure_shows_exact_and_approximate(self, capsys):
        main(["check", BROKEN_H2])
        out = capsys.readouterr().out
        assert "FAIL order_consistency" in out
        assert "lhs 4/3" in out
        assert "~1.33333" in out
        assert "summary: FAIL (exit 1)" in out

    def test_informational_suites_marked(self, capsys):
        main(["check", EXAMPLE1])
        out = capsys.readouterr().out
        assert "bounded_positivity  [informational]" in out
