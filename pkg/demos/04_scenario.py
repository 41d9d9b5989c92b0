"""
Closing a footpath: command-line workflow
=========================================

Runs the ``pedtap`` commands in-process: assign the toy network, close one
bidirectional footpath and compare volumes.
"""
import csv
import tempfile
from pathlib import Path

from pedtap import io
from pedtap.cases import TOY_LINKS, toy_demand, toy_network
from pedtap.cli import main

work = Path(tempfile.mkdtemp(prefix="pedtap-"))
io.write_network(toy_network(), work)
io.write_demand(toy_demand(1), work / "demand.csv")
io.dump_yaml({"network": {"flow_scale": 3.0}, "demand": {"period_s": 60.0}}, work / "config.yaml")

###############################################################################
# Base assignment. The output folder holds link results, paths, the gap
# history, a summary and a manifest.

main(["assign", "--nodes", str(work / "nodes.csv"), "--links", str(work / "links.csv"),
      "--demand", str(work / "demand.csv"), "--config", str(work / "config.yaml"), "--out", str(work / "base")])
print(sorted(p.name for p in (work / "base").iterdir()))

###############################################################################
# Close C-A. Its mirror A-C goes too; a closure always removes whole streams.

io.dump_yaml({"close_links": [TOY_LINKS["C-A"]]}, work / "close.yaml")
main(["scenario", str(work / "base"), str(work / "close.yaml"), "--out", str(work / "closed")])

names = {v: k for k, v in TOY_LINKS.items()}
with open(work / "closed" / "link_delta.csv") as fh:
    for row in csv.DictReader(fh):
        print(f"{names[int(row['link_id'])]:4s} {float(row['delta']):+6.2f}")

main(["report", str(work / "closed")])
