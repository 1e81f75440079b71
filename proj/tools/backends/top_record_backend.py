#!/usr/bin/env python3
"""Minimal diagnosis backend for the command bridge.

Reads the context file failanchor writes, blames the highest-ranked record,
and writes a raw diagnosis object. Meant as a template for wiring in a model
call: replace `diagnose` with a request to your model and keep the I/O.

    failanchor diagnose --trace run.jsonl --config cfg.json
    cfg.json: {"diagnose": {"backend_command":
               "python3 tools/backends/top_record_backend.py {context} {output}"}}
"""
import json
import sys


def diagnose(context):
    records = context["records"]
    if not records:
        raise SystemExit("no records to diagnose")
    top = records[0]
    anchor = top["anchor"]
    digest = context["digest"]
    if digest["submitted"] and not digest["verified_before_submission"]:
        mistake = "submitted before any passing verification"
    else:
        mistake = "stopped without verifying outcome"
    others = records[1:4]
    return {
        "primary_cause": {
            "text": f"{top['anchor_kind'].replace('_', ' ')} on '{anchor['key']}'",
            "record_ids": [top["record_id"]],
        },
        "failure_anchor": {
            "key": anchor["key"],
            "category": anchor["category"],
            "tool": anchor.get("tool", ""),
            "record_ids": [top["record_id"]],
        },
        "behavioral_mistake": {"text": mistake, "record_ids": [top["record_id"]]},
        "contributing_factors": [
            {"text": f"{r['anchor_kind']} '{r['anchor']['key']}'", "record_id": r["record_id"]} for r in others
        ],
        "evidence_summary": f"{len(records)} records; outcome {digest['final_outcome']}",
        "confidence": 0.6,
    }


def main():
    if len(sys.argv) != 3:
        raise SystemExit("usage: top_record_backend.py CONTEXT OUTPUT")
    with open(sys.argv[1], encoding="utf-8") as f:
        context = json.load(f)
    with open(sys.argv[2], "w", encoding="utf-8") as f:
        json.dump(diagnose(context), f, indent=2)


if __name__ == "__main__":
    main()
