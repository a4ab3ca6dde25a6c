import csv
import io
import json
import socket
import threading

import pytest

from app import cli
from app.cli import build_parser, main
from app.engine.core.models import KeyPair
from app.engine.hhb_engine import generate_keys
from app.engine.netio.roles import MitmProxy, ReaderServer


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_keygen_is_deterministic_for_a_seed(capsys):
    code, first, _ = _run(capsys, "keygen", "--k", "16", "--seed", "9")
    assert code == 0
    _, second, _ = _run(capsys, "keygen", "--k", "16", "--seed", "9")
    assert first == second
    keys = KeyPair.from_json(json.loads(first))
    assert keys.k == 16


def test_keygen_writes_a_file(tmp_path, capsys):
    out = tmp_path / "keys.json"
    code, stdout, _ = _run(capsys, "keygen", "--k", "8", "--seed", "1", "--out", str(out))
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["k"] == 8


def test_simulate_honest(capsys):
    code, out, err = _run(capsys, "simulate", "--k", "8", "--sessions", "50", "--seed", "3")
    assert code == 0
    record = json.loads(out)
    assert record["spec"]["seed"] == 3
    assert record["rates"]["accept"]["n"] == 50
    assert "[CLI]" in err


def test_simulate_with_a_key_file_and_csv(tmp_path, capsys):
    keyfile = tmp_path / "keys.json"
    _run(capsys, "keygen", "--k", "8", "--seed", "4", "--out", str(keyfile))
    code, out, _ = _run(capsys, "simulate", "--k", "8", "--sessions", "10", "--seed", "3",
                        "--keys", str(keyfile), "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 11 and rows[-1]["stage"] == "aggregate:honest"


def test_attack_y_record(capsys):
    code, out, _ = _run(capsys, "attack-y", "--k", "8", "--m", "5", "--seed", "11")
    assert code == 0
    record = json.loads(out)
    y = record["recovery"]["y"]
    assert {"recovered_hex", "truth_hex", "bit_accuracy", "estimates", "min_confidence"} <= set(y)
    assert y["recovered_hex"] == y["truth_hex"]
    assert len(record["outcomes"]) == 40


def test_config_errors_exit_with_two(capsys):
    code, _, err = _run(capsys, "simulate", "--k", "4", "--sessions", "5")
    assert code == 2 and "config error: k" in err
    code, _, err = _run(capsys, "simulate", "--k", "8", "--eps", "0.5", "--sessions", "5")
    assert code == 2 and "eps" in err
    code, _, _ = _run(capsys, "keygen", "--k", "4")
    assert code == 2
    code, _, _ = _run(capsys, "attack-s", "--k", "8", "--m", "2", "--pairs", "0,x")
    assert code == 2


@pytest.mark.parametrize("argv, field", [
    (["serve-reader", "--k", "8", "--eps", "0.5", "--listen", "127.0.0.1:0"], "eps"),
    (["run-tag", "--k", "8", "--eps", "0.5", "--connect", "127.0.0.1:1"], "eps"),
    (["simulate", "--k", "8", "--eps", "0.499995", "--sessions", "5"], "eps"),
    (["keygen", "--k", "8", "--seed", "-1"], "seed"),
    (["keygen", "--k", "8", "--seed", str(1 << 64)], "seed"),
    (["run-proxy", "--seed", "-5", "--listen", "127.0.0.1:0", "--upstream", "127.0.0.1:1"], "seed"),
    (["run-proxy", "--attack", "y", "--m", "0", "--listen", "127.0.0.1:0", "--upstream", "127.0.0.1:1"], "m"),
])
def test_out_of_range_values_exit_with_two(capsys, argv, field):
    code, out, err = _run(capsys, *argv)
    assert code == 2
    assert f"config error: {field}" in err
    assert out == ""


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _announcing(cls, ready: threading.Event):
    class Announcing(cls):
        def start(self):
            address = super().start()
            ready.set()
            return address
    return Announcing


def _json_documents(text: str) -> list:
    decoder, docs, pos = json.JSONDecoder(), [], 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            return docs
        doc, pos = decoder.raw_decode(text, pos)
        docs.append(doc)


def test_proxy_recovers_y_from_separate_reader_and_tag(monkeypatch, capsys):
    k, m, seed = 8, 3, 77
    reader_up, proxy_up = threading.Event(), threading.Event()
    monkeypatch.setattr(cli, "ReaderServer", _announcing(ReaderServer, reader_up))
    monkeypatch.setattr(cli, "MitmProxy", _announcing(MitmProxy, proxy_up))
    reader_port, proxy_port = _free_port(), _free_port()
    codes = {}

    def run(name, *argv):
        codes[name] = main(list(argv))

    reader = threading.Thread(target=run, daemon=True, args=(
        "reader", "serve-reader", "--k", str(k), "--seed", str(seed),
        "--listen", f"127.0.0.1:{reader_port}", "--sessions", str(k * m)))
    proxy = threading.Thread(target=run, daemon=True, args=(
        "proxy", "run-proxy", "--seed", "5", "--attack", "y", "--m", str(m),
        "--listen", f"127.0.0.1:{proxy_port}", "--upstream", f"127.0.0.1:{reader_port}"))
    reader.start()
    assert reader_up.wait(10)
    proxy.start()
    assert proxy_up.wait(10)

    codes["tag"] = main(["run-tag", "--k", str(k), "--seed", str(seed),
                         "--connect", f"127.0.0.1:{proxy_port}", "--sessions", str(k * m)])
    reader.join(30)
    proxy.join(30)
    assert not reader.is_alive() and not proxy.is_alive()
    assert codes == {"reader": 0, "proxy": 0, "tag": 0}

    records = {doc["spec"]["command"]: doc for doc in _json_documents(capsys.readouterr().out)}
    assert set(records) == {"serve-reader", "run-proxy", "run-tag"}
    report = records["run-proxy"]["recovery"]["y"]
    assert "truth_hex" not in report
    assert report["total_sessions"] == k * m
    assert report["recovered_hex"] == generate_keys(k, seed).y.to_hex()
    assert len(records["serve-reader"]["outcomes"]) == k * m


def test_unreachable_reader_exits_with_three(capsys):
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    code, _, err = _run(capsys, "run-tag", "--k", "8", "--seed", "1", "--connect", f"127.0.0.1:{port}")
    assert code == 3 and "transport error" in err


def test_parser_knows_every_subcommand():
    parser = build_parser()
    for command in ("keygen", "simulate", "attack-y", "attack-s", "attack-full", "sweep",
                    "serve-reader", "run-tag", "run-proxy"):
        extra = []
        if command in ("serve-reader", "run-proxy"):
            extra = ["--listen", "127.0.0.1:0"]
        if command == "run-proxy":
            extra += ["--upstream", "127.0.0.1:1"]
        if command == "run-tag":
            extra = ["--connect", "127.0.0.1:1"]
        if command == "sweep":
            extra = ["--axis", "eps", "--values", "0.1"]
        assert parser.parse_args([command, *extra]).command == command
