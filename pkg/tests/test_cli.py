from __future__ import annotations

import json

import pytest

from concernmap.cli import main

from conftest import FIXTURES


def _index(tmp_path, out_name="fixture.kb"):
    kb_path = tmp_path / out_name
    rc = main(
        [
            "index",
            "--repo", str(FIXTURES / "leave_group_repo"),
            "--commit", "fixturecommit",
            "--repo-name", "leave_group_repo",
            "--out", str(kb_path),
            "--config", str(FIXTURES / "stub_config.json"),
        ]
    )
    return rc, kb_path


def _concerns(tmp_path, kb_path, out_name="ranked.json", extra=()):
    out = tmp_path / out_name
    rc = main(
        [
            "concerns",
            "--kb", str(kb_path),
            "--issue", str(FIXTURES / "leave_group_issue.json"),
            "--out", str(out),
            "--config", str(FIXTURES / "stub_config.json"),
            *extra,
        ]
    )
    return rc, out


def test_index_builds_expected_kb(tmp_path, capsys):
    rc, kb_path = _index(tmp_path)
    assert rc == 0
    assert kb_path.is_file()
    out = capsys.readouterr().out
    assert "7 function(s)" in out
    assert "41 term record(s)" in out  # enumerated from the fixture trace
    assert "6 call edge(s)" in out


def test_index_empty_repo_exit_zero(tmp_path, capsys):
    repo = tmp_path / "empty"
    repo.mkdir()
    rc = main(
        [
            "index",
            "--repo", str(repo),
            "--commit", "c",
            "--out", str(tmp_path / "empty.kb"),
            "--config", str(FIXTURES / "stub_config.json"),
        ]
    )
    assert rc == 0
    assert (tmp_path / "empty.kb").is_file()


def test_index_missing_repo_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["index", "--commit", "c"])
    assert err.value.code == 2


def test_concerns_produces_nonempty_ranked_file(tmp_path):
    _, kb_path = _index(tmp_path)
    rc, out = _concerns(tmp_path, kb_path)
    assert rc == 0
    data = json.loads(out.read_text())
    assert data["issue_id"] == "leave-group-1"
    assert len(data["concerns"]) == 3


def test_concerns_top_n_one(tmp_path):
    _, kb_path = _index(tmp_path)
    rc, out = _concerns(tmp_path, kb_path, extra=["--top-n", "1"])
    assert rc == 0
    data = json.loads(out.read_text())
    assert len(data["concerns"]) == 1


def test_concerns_unreadable_kb_exit_one(tmp_path, capsys):
    rc, _ = _concerns(tmp_path, tmp_path / "missing.kb")
    assert rc == 1


def test_concerns_zero_matches_warns_exit_zero(tmp_path, capsys):
    _, kb_path = _index(tmp_path)
    issue = tmp_path / "odd_issue.json"
    issue.write_text(json.dumps({"id": "odd", "title": "completely unrelated topic"}))
    stub = tmp_path / "stub.json"
    stub.write_text(
        json.dumps(
            {
                "rules": [
                    {
                        "contains": ["## Task: issue keyword extraction"],
                        "response": "zebra\nxylophone",
                    }
                ]
            }
        )
    )
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"gateway": {"kind": "stub", "script": str(stub)}}))
    out = tmp_path / "empty_ranked.json"
    rc = main(
        [
            "concerns",
            "--kb", str(kb_path),
            "--issue", str(issue),
            "--out", str(out),
            "--config", str(config),
        ]
    )
    assert rc == 0
    data = json.loads(out.read_text())
    assert data["concerns"] == []
    assert "no concerns" in capsys.readouterr().err


def test_enhance_workflow_mode(tmp_path, capsys):
    _, kb_path = _index(tmp_path)
    _, ranked = _concerns(tmp_path, kb_path)
    base = tmp_path / "base.txt"
    base.write_text("You can only search for files within the current given file repository structure.")
    out = tmp_path / "enhanced.txt"
    rc = main(
        [
            "enhance",
            "--concerns", str(ranked),
            "--base-prompt", str(base),
            "--mode", "workflow",
            "--out", str(out),
        ]
    )
    assert rc == 0
    enhanced = out.read_text()
    assert "Pay special attention" in enhanced
    assert base.read_text() in enhanced


def test_enhance_agent_mode_stdout(tmp_path, capsys):
    _, kb_path = _index(tmp_path)
    _, ranked = _concerns(tmp_path, kb_path)
    base = tmp_path / "base.txt"
    base.write_text("Locate specific files and functions requiring changes.")
    rc = main(["enhance", "--concerns", str(ranked), "--base-prompt", str(base), "--mode", "agent"])
    assert rc == 0
    assert "guiding context" in capsys.readouterr().out


def test_enhance_invalid_mode_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["enhance", "--concerns", "x", "--base-prompt", "y", "--mode", "chaotic"])
    assert err.value.code == 2


def test_evaluate_hand_built_three_tasks(tmp_path, capsys):
    tasks = tmp_path / "tasks.jsonl"
    tasks.write_text(
        "\n".join(
            json.dumps(t)
            for t in [
                {"id": "a", "gold_files": ["x.ts"], "gold_functions": ["x.ts:f"]},
                {"id": "b", "gold_files": ["y.ts"], "gold_functions": ["y.ts:g"]},
                {"id": "c", "gold_files": ["z.ts"], "gold_functions": ["z.ts:h"]},
            ]
        )
    )
    predictions = tmp_path / "preds.jsonl"
    predictions.write_text(
        "\n".join(
            json.dumps(p)
            for p in [
                {"id": "a", "files": ["x.ts"], "functions": ["x.ts:f"]},
                {"id": "b", "files": ["w.ts"], "functions": ["w.ts:q"]},
                {"id": "c", "files": ["z.ts"], "functions": []},
            ]
        )
    )
    report_path = tmp_path / "report.json"
    rc = main(
        [
            "evaluate",
            "--tasks", str(tasks),
            "--predictions", str(predictions),
            "--out", str(report_path),
        ]
    )
    assert rc == 0
    report = json.loads(report_path.read_text())
    # Hand computed: file hits at 1 = a and c -> 2/3; function hit@1 = a only.
    assert report["metrics"]["file"]["hit"]["1"] == pytest.approx(2 / 3)
    assert report["metrics"]["function"]["hit"]["1"] == pytest.approx(1 / 3)
    assert report["metrics"]["file"]["recall"]["10"] == pytest.approx(2 / 3)


def test_evaluate_single_k_column(tmp_path, capsys):
    tasks = tmp_path / "tasks.jsonl"
    tasks.write_text(json.dumps({"id": "a", "gold_files": ["x.ts"], "gold_functions": []}))
    predictions = tmp_path / "preds.jsonl"
    predictions.write_text(json.dumps({"id": "a", "files": ["x.ts"], "functions": []}))
    rc = main(
        [
            "evaluate",
            "--tasks", str(tasks),
            "--predictions", str(predictions),
            "--levels", "file",
            "--ks", "1",
        ]
    )
    assert rc == 0
    table = capsys.readouterr().out
    assert "k=1" in table
    assert "k=5" not in table


def test_evaluate_missing_inputs_exit_one(tmp_path):
    tasks = tmp_path / "tasks.jsonl"
    tasks.write_text(json.dumps({"id": "a", "gold_files": ["x.ts"], "gold_functions": []}))
    rc = main(["evaluate", "--tasks", str(tasks)])
    assert rc == 1


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    out = capsys.readouterr().out
    assert "kb format" in out


def test_concerns_variant_wo_con(tmp_path):
    _, kb_path = _index(tmp_path)
    rc, out = _concerns(
        tmp_path, kb_path, out_name="wo_con.json", extra=["--mode", "wo-con", "--top-n", "5"]
    )
    assert rc == 0
    data = json.loads(out.read_text())
    assert 1 <= len(data["concerns"]) <= 5
    assert all(concern["stage"] == "selected" for concern in data["concerns"])


def test_concerns_variant_wo_exp(tmp_path):
    _, kb_path = _index(tmp_path)
    rc, out = _concerns(
        tmp_path,
        kb_path,
        out_name="wo_exp.json",
        extra=["--mode", "wo-exp", "--repo", str(FIXTURES / "leave_group_repo"), "--top-n", "4"],
    )
    assert rc == 0
    data = json.loads(out.read_text())
    assert len(data["concerns"]) == 4
    locations = [rc_["code_location"] for c in data["concerns"] for rc_ in c["related_code"]]
    assert all(":" in loc for loc in locations)


def test_concerns_variant_wo_exp_requires_repo(tmp_path, capsys):
    _, kb_path = _index(tmp_path)
    rc, _ = _concerns(tmp_path, kb_path, out_name="fail.json", extra=["--mode", "wo-exp"])
    assert rc == 1
