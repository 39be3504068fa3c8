from __future__ import annotations

import pytest

from ttpattrib.embedding import LocalHashProvider, ProviderConfig
from ttpattrib.synthetic import SyntheticData, make_synthetic
from ttpattrib.taxonomy import Taxonomy, TechniqueId, TtpRecord, build_taxonomy

# small ATT&CK-shaped fixture: live techniques, sub-techniques, and one
# deprecated record that merged into a live one
FIXTURE_RECORDS = (
    TtpRecord(TechniqueId("T1057"), "Process Discovery",
              "Adversaries may attempt to get information about running processes."),
    TtpRecord(TechniqueId("T1059"), "Command and Scripting Interpreter",
              "Adversaries may abuse command and script interpreters to execute commands."),
    TtpRecord(TechniqueId("T1059", "001"), "PowerShell",
              "Adversaries may abuse PowerShell commands and scripts for execution."),
    TtpRecord(TechniqueId("T1064"), "Scripting", "Use of scripts for execution.",
              deprecated=True, merged_into=TechniqueId("T1059")),
    TtpRecord(TechniqueId("T1083"), "File and Directory Discovery",
              "Adversaries may enumerate files and directories on a host."),
    TtpRecord(TechniqueId("T1087"), "Account Discovery",
              "Adversaries may attempt to get a listing of accounts on a system."),
    TtpRecord(TechniqueId("T1087", "001"), "Local Account",
              "Adversaries may attempt to get a listing of local system accounts."),
    TtpRecord(TechniqueId("T1570"), "Lateral Tool Transfer",
              "Adversaries may transfer tools between systems in a compromised environment."),
    TtpRecord(TechniqueId("T1588"), "Obtain Capabilities",
              "Adversaries may buy or steal capabilities for use during targeting."),
    TtpRecord(TechniqueId("T1588", "002"), "Tool",
              "Adversaries may buy or steal software tools for use during targeting."),
)

TAXONOMY_CSV = """id,name,definition,deprecated,merged_into,parent
T1057,Process Discovery,Adversaries may attempt to get information about running processes.,,,
T1059,Command and Scripting Interpreter,Adversaries may abuse command and script interpreters to execute commands.,,,
T1059.001,PowerShell,Adversaries may abuse PowerShell commands and scripts for execution.,,,T1059
T1064,Scripting,Use of scripts for execution.,true,T1059,
T1083,File and Directory Discovery,Adversaries may enumerate files and directories on a host.,,,
T1087,Account Discovery,Adversaries may attempt to get a listing of accounts on a system.,,,
T1087.001,Local Account,Adversaries may attempt to get a listing of local system accounts.,,,T1087
T1570,Lateral Tool Transfer,Adversaries may transfer tools between systems in a compromised environment.,,,
T1588,Obtain Capabilities,Adversaries may buy or steal capabilities for use during targeting.,,,
T1588.002,Tool,Adversaries may buy or steal software tools for use during targeting.,,,T1588
"""


@pytest.fixture()
def tax() -> Taxonomy:
    return build_taxonomy(FIXTURE_RECORDS)


@pytest.fixture()
def tax_csv(tmp_path):
    path = tmp_path / "taxonomy.csv"
    path.write_text(TAXONOMY_CSV, encoding="utf-8")
    return path


@pytest.fixture()
def provider() -> LocalHashProvider:
    return LocalHashProvider(ProviderConfig())


@pytest.fixture(scope="session")
def synth() -> SyntheticData:
    return make_synthetic()
