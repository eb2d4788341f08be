"""Declarative fixture corpus: app plans, APK assembly, and golden facts.

Golden files are derived from these plans (the construction ground truth),
never from running the parsers under test. Regenerate the checked-in fixtures
with `python -m support.corpus` from the tests directory.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

from .axml_builder import ResRef, XmlNode, encode_axml, manifest_node
from .dex_builder import ClassPlan, DexAssembler, FieldSig, MethodPlan, MethodSig

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# Shorthand method signatures used across app plans.
RESOLVER_QUERY = MethodSig(
    "Landroid/content/ContentResolver;", "query", ("Landroid/net/Uri;",), "Landroid/database/Cursor;"
)
RESOLVER_INSERT = MethodSig(
    "Landroid/content/ContentResolver;", "insert", ("Landroid/net/Uri;",), "Landroid/net/Uri;"
)
CONTACTS_URI = FieldSig(
    "Landroid/provider/ContactsContract$Contacts;", "CONTENT_URI", "Landroid/net/Uri;"
)
CALLLOG_URI = FieldSig("Landroid/provider/CallLog$Calls;", "CONTENT_URI", "Landroid/net/Uri;")
SMS_URI = FieldSig("Landroid/provider/Telephony$Sms;", "CONTENT_URI", "Landroid/net/Uri;")
MEDIA_URI = FieldSig(
    "Landroid/provider/MediaStore$Images$Media;", "EXTERNAL_CONTENT_URI", "Landroid/net/Uri;"
)
OKHTTP_NEWCALL = MethodSig("Lokhttp3/OkHttpClient;", "newCall", (), "Lokhttp3/Call;")
URLCONN_STREAM = MethodSig("Ljava/net/HttpURLConnection;", "getInputStream", (), "Ljava/io/InputStream;")
URLCONN_GENERIC = MethodSig("Ljava/net/URLConnection;", "connect", (), "V")
RETROFIT_EXECUTE = MethodSig("Lretrofit2/Call;", "execute", (), "Lretrofit2/Response;")
OKGO_POST = MethodSig("Lcom/lzy/okgo/OkGo;", "post", (), "Lcom/lzy/okgo/request/PostRequest;")
GET_ACCOUNTS = MethodSig("Landroid/accounts/AccountManager;", "getAccounts", (), "[Landroid/accounts/Account;")
LAST_LOCATION = MethodSig(
    "Landroid/location/LocationManager;", "getLastKnownLocation", ("Ljava/lang/String;",), "Landroid/location/Location;"
)
ENV_EXTERNAL = MethodSig("Landroid/os/Environment;", "getExternalStorageDirectory", (), "Ljava/io/File;")
INSTALLED_PACKAGES = MethodSig(
    "Landroid/content/pm/PackageManager;", "getInstalledPackages", ("I",), "Ljava/util/List;"
)
REFLECT_INVOKE = MethodSig(
    "Ljava/lang/reflect/Method;", "invoke", ("Ljava/lang/Object;",), "Ljava/lang/Object;"
)


def P(name: str) -> str:
    return "android.permission." + name


@dataclass
class AppPlan:
    package: str
    jurisdiction: str
    status: str  # registry status
    version_code: int
    min_sdk: int
    target_sdk: int | None
    permissions: list[str] = field(default_factory=list)
    sdk23_permissions: list[str] = field(default_factory=list)
    # (xml name, qualified name, launcher) — qualification is declared, not computed
    activities: list[tuple[str, str, bool]] = field(default_factory=list)
    aliases: list[tuple[str, str, str, bool]] = field(default_factory=list)  # name, target, qualified target, launcher
    dex_plans: list[list[ClassPlan]] = field(default_factory=list)
    unresolved_permission: bool = False  # add a resource-ref uses-permission

    def expected_target_sdk(self) -> int:
        if self.target_sdk is not None:
            return self.target_sdk
        return self.min_sdk


def onCreate(cls: str) -> MethodSig:
    return MethodSig(cls, "onCreate", ("Landroid/os/Bundle;",), "V")


def _plan_list() -> list[AppPlan]:
    plans: list[AppPlan] = []

    # 1. Indonesia: fine location only -> platform-only asymmetric violator.
    cls = "Lcom/luna/credit/HomeActivity;"
    send = MethodSig("Lcom/luna/credit/Uplink;", "push", (), "V")
    plans.append(
        AppPlan(
            package="com.luna.credit",
            jurisdiction="Indonesia",
            status="approved",
            version_code=12,
            min_sdk=23,
            target_sdk=34,
            permissions=[P("ACCESS_FINE_LOCATION"), P("INTERNET")],
            activities=[(".HomeActivity", "com.luna.credit.HomeActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[(LAST_LOCATION, "invoke-virtual"), (send, "invoke-static")]),
                    ]),
                    ClassPlan("Lcom/luna/credit/Uplink;", methods=[
                        MethodPlan(send, static=True, calls=[(OKHTTP_NEWCALL, "invoke-virtual")]),
                    ]),
                ]
            ],
        )
    )

    # 2. Nigeria: READ_CALL_LOG only -> country-only violator.
    cls = "Lng/kudi/cash/MainActivity;"
    reader = MethodSig("Lng/kudi/cash/LogReader;", "dump", (), "V")
    plans.append(
        AppPlan(
            package="ng.kudi.cash",
            jurisdiction="Nigeria",
            status="approved",
            version_code=45,
            min_sdk=21,
            target_sdk=33,
            permissions=[P("READ_CALL_LOG"), P("INTERNET")],
            activities=[(".MainActivity", "ng.kudi.cash.MainActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[(reader, "invoke-static")]),
                    ]),
                    ClassPlan("Lng/kudi/cash/LogReader;", methods=[
                        MethodPlan(reader, static=True,
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"), (URLCONN_STREAM, "invoke-virtual")],
                                   field_reads=[CALLLOG_URI]),
                    ]),
                ]
            ],
        )
    )

    # 3. Kenya: clean app, nothing prohibited, no sinks.
    cls = "Lke/tala/save/EntryActivity;"
    plans.append(
        AppPlan(
            package="ke.tala.save",
            jurisdiction="Kenya",
            status="approved",
            version_code=3,
            min_sdk=24,
            target_sdk=34,
            permissions=[P("INTERNET"), P("ACCESS_NETWORK_STATE")],
            activities=[(".EntryActivity", "ke.tala.save.EntryActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[
                            (MethodSig("Lke/tala/save/Ui;", "render", (), "V"), "invoke-static"),
                        ]),
                    ]),
                    ClassPlan("Lke/tala/save/Ui;", methods=[
                        MethodPlan(MethodSig("Lke/tala/save/Ui;", "render", (), "V"), static=True),
                    ]),
                ]
            ],
        )
    )

    # 4. Pakistan: SMS + contacts, symmetric violator; multidex with the sink
    #    in classes2.dex.
    cls = "Lpk/paisa/now/StartActivity;"
    smsgrab = MethodSig("Lpk/paisa/now/SmsGrab;", "grab", (), "V")
    ship = MethodSig("Lpk/paisa/now/x/Shipper;", "ship", (), "V")
    plans.append(
        AppPlan(
            package="pk.paisa.now",
            jurisdiction="Pakistan",
            status="approved",
            version_code=201,
            min_sdk=21,
            target_sdk=33,
            permissions=[P("READ_SMS"), P("SEND_SMS"), P("READ_CONTACTS"), P("INTERNET"), P("CAMERA")],
            activities=[(".StartActivity", "pk.paisa.now.StartActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[(smsgrab, "invoke-static")]),
                    ]),
                    ClassPlan("Lpk/paisa/now/SmsGrab;", methods=[
                        MethodPlan(smsgrab, static=True,
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"), (ship, "invoke-static")],
                                   field_reads=[SMS_URI, CONTACTS_URI]),
                    ]),
                ],
                [
                    ClassPlan("Lpk/paisa/now/x/Shipper;", methods=[
                        MethodPlan(ship, static=True, calls=[(RETROFIT_EXECUTE, "invoke-interface")]),
                    ]),
                ],
            ],
        )
    )

    # 5. Philippines: GET_ACCOUNTS only -> country-only violator.
    cls = "Lph/peso/quick/LobbyActivity;"
    plans.append(
        AppPlan(
            package="ph.peso.quick",
            jurisdiction="Philippines",
            status="approved",
            version_code=9,
            min_sdk=22,
            target_sdk=32,
            permissions=[P("GET_ACCOUNTS"), P("INTERNET")],
            activities=[(".LobbyActivity", "ph.peso.quick.LobbyActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[
                            (GET_ACCOUNTS, "invoke-virtual"),
                            (URLCONN_GENERIC, "invoke-virtual"),
                        ]),
                    ]),
                ]
            ],
        )
    )

    # 6. Nigeria: legacy storage pair at target 29 (exact level-range hit).
    cls = "Lng/swift/loan/DashActivity;"
    plans.append(
        AppPlan(
            package="ng.swift.loan",
            jurisdiction="Nigeria",
            status="delisted",
            version_code=77,
            min_sdk=19,
            target_sdk=29,
            permissions=[P("READ_EXTERNAL_STORAGE"), P("WRITE_EXTERNAL_STORAGE"), P("INTERNET")],
            activities=[(".DashActivity", "ng.swift.loan.DashActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls),
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"),
                                          (ENV_EXTERNAL, "invoke-static"),
                                          (RESOLVER_INSERT, "invoke-virtual"),
                                          (OKHTTP_NEWCALL, "invoke-virtual")],
                                   field_reads=[MEDIA_URI]),
                    ]),
                ]
            ],
        )
    )

    # 7. Pakistan: granular media permission at target 34.
    cls = "Lpk/foto/loan/GalleryActivity;"
    plans.append(
        AppPlan(
            package="pk.foto.loan",
            jurisdiction="Pakistan",
            status="delisted",
            version_code=5,
            min_sdk=26,
            target_sdk=34,
            permissions=[P("READ_MEDIA_IMAGES"), P("INTERNET")],
            activities=[(".GalleryActivity", "pk.foto.loan.GalleryActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls),
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"), (OKGO_POST, "invoke-static")],
                                   field_reads=[MEDIA_URI]),
                    ]),
                ]
            ],
        )
    )

    # 8. Kenya: launcher declared through an activity-alias.
    cls = "Lke/okoa/pesa/RealHome;"
    push = MethodSig("Lke/okoa/pesa/Push;", "go", (), "V")
    plans.append(
        AppPlan(
            package="ke.okoa.pesa",
            jurisdiction="Kenya",
            status="approved",
            version_code=30,
            min_sdk=23,
            target_sdk=33,
            permissions=[P("READ_CONTACTS"), P("INTERNET")],
            activities=[(".RealHome", "ke.okoa.pesa.RealHome", False)],
            aliases=[(".HomeAlias", ".RealHome", "ke.okoa.pesa.RealHome", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls),
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"), (push, "invoke-static")],
                                   field_reads=[CONTACTS_URI]),
                    ]),
                    ClassPlan("Lke/okoa/pesa/Push;", methods=[
                        MethodPlan(push, static=True, calls=[(OKHTTP_NEWCALL, "invoke-virtual")]),
                    ]),
                ]
            ],
        )
    )

    # 9. Indonesia: contacts declared via uses-permission-sdk-23.
    cls = "Lid/dana/kilat/SplashActivity;"
    plans.append(
        AppPlan(
            package="id.dana.kilat",
            jurisdiction="Indonesia",
            status="approved",
            version_code=18,
            min_sdk=21,
            target_sdk=31,
            permissions=[P("INTERNET")],
            sdk23_permissions=[P("READ_CONTACTS")],
            activities=[(".SplashActivity", "id.dana.kilat.SplashActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls),
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"), (URLCONN_STREAM, "invoke-virtual")],
                                   field_reads=[CONTACTS_URI]),
                    ]),
                ]
            ],
        )
    )

    # 10. Nigeria: target SDK beyond the mapping table, exercising fallback.
    cls = "Lng/padi/fund/BootActivity;"
    plans.append(
        AppPlan(
            package="ng.padi.fund",
            jurisdiction="Nigeria",
            status="approved",
            version_code=501,
            min_sdk=30,
            target_sdk=37,
            permissions=[P("QUERY_ALL_PACKAGES"), P("INTERNET")],
            activities=[(".BootActivity", "ng.padi.fund.BootActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[
                            (INSTALLED_PACKAGES, "invoke-virtual"),
                            (OKHTTP_NEWCALL, "invoke-virtual"),
                        ]),
                    ]),
                ]
            ],
        )
    )

    # 11. Philippines: clean but reflective; one abstract method contributes
    #     no invocations.
    cls = "Lph/agila/pay/MainActivity;"
    handler = MethodSig("Lph/agila/pay/Dyn;", "call", (), "V")
    abstract_sig = MethodSig("Lph/agila/pay/Dyn;", "onEvent", (), "V")
    plans.append(
        AppPlan(
            package="ph.agila.pay",
            jurisdiction="Philippines",
            status="delisted",
            version_code=2,
            min_sdk=21,
            target_sdk=30,
            permissions=[P("INTERNET")],
            activities=[(".MainActivity", "ph.agila.pay.MainActivity", True)],
            dex_plans=[
                [
                    ClassPlan(cls, methods=[
                        MethodPlan(onCreate(cls), calls=[(handler, "invoke-static")]),
                    ]),
                    ClassPlan("Lph/agila/pay/Dyn;", methods=[
                        MethodPlan(handler, static=True, calls=[(REFLECT_INVOKE, "invoke-virtual")]),
                        MethodPlan(abstract_sig, abstract=True),
                    ]),
                ]
            ],
        )
    )

    # 12. Pakistan: three-hop source-to-sink chain rooted off the launcher,
    #     plus an unresolved resource-reference permission name.
    a = "Lpk/qarz/app/AuxActivity;"
    b = MethodSig("Lpk/qarz/app/Stage1;", "hop", (), "V")
    c = MethodSig("Lpk/qarz/app/Stage2;", "hop", (), "V")
    d = MethodSig("Lpk/qarz/app/Stage3;", "fire", (), "V")
    plans.append(
        AppPlan(
            package="pk.qarz.app",
            jurisdiction="Pakistan",
            status="approved",
            version_code=66,
            min_sdk=21,
            target_sdk=28,
            permissions=[P("READ_CONTACTS"), P("INTERNET")],
            activities=[
                (".LaunchActivity", "pk.qarz.app.LaunchActivity", True),
                (".AuxActivity", "pk.qarz.app.AuxActivity", False),
            ],
            unresolved_permission=True,
            dex_plans=[
                [
                    ClassPlan("Lpk/qarz/app/LaunchActivity;", methods=[
                        MethodPlan(onCreate("Lpk/qarz/app/LaunchActivity;"), calls=[
                            (MethodSig("Lpk/qarz/app/Ui;", "show", (), "V"), "invoke-static"),
                        ]),
                    ]),
                    ClassPlan("Lpk/qarz/app/Ui;", methods=[
                        MethodPlan(MethodSig("Lpk/qarz/app/Ui;", "show", (), "V"), static=True),
                    ]),
                    ClassPlan(a, methods=[
                        MethodPlan(onCreate(a),
                                   calls=[(RESOLVER_QUERY, "invoke-virtual"), (b, "invoke-static")],
                                   field_reads=[CONTACTS_URI]),
                    ]),
                    ClassPlan("Lpk/qarz/app/Stage1;", methods=[
                        MethodPlan(b, static=True, calls=[(c, "invoke-static")]),
                    ]),
                    ClassPlan("Lpk/qarz/app/Stage2;", methods=[
                        MethodPlan(c, static=True, calls=[(d, "invoke-static")]),
                    ]),
                    ClassPlan("Lpk/qarz/app/Stage3;", methods=[
                        MethodPlan(d, static=True, calls=[(URLCONN_STREAM, "invoke-virtual")]),
                    ]),
                ]
            ],
        )
    )

    return plans


APP_PLANS = _plan_list()


def manifest_bytes(plan: AppPlan) -> bytes:
    node = manifest_node(
        plan.package,
        permissions=plan.permissions,
        sdk23_permissions=plan.sdk23_permissions,
        min_sdk=plan.min_sdk,
        target_sdk=plan.target_sdk,
        version_code=plan.version_code,
        activities=[{"name": name, "launcher": launcher} for name, _q, launcher in plan.activities],
        aliases=[
            {"name": name, "target": target, "launcher": launcher}
            for name, target, _q, launcher in plan.aliases
        ],
    )
    if plan.unresolved_permission:
        extra = XmlNode("uses-permission")
        extra.android_attrs["name"] = ResRef(0x7F010001)
        node.children.insert(0, extra)
    return encode_axml(node)


def apk_bytes(plan: AppPlan) -> bytes:
    entries = [("AndroidManifest.xml", manifest_bytes(plan))]
    for i, dex_plan in enumerate(plan.dex_plans):
        name = "classes.dex" if i == 0 else f"classes{i + 1}.dex"
        entries.append((name, DexAssembler(dex_plan).build()))
    return zip_bytes(entries)


def zip_bytes(entries: list[tuple[str, bytes]], method: int = zipfile.ZIP_DEFLATED) -> bytes:
    """Deterministic ZIP assembly (fixed timestamps)."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, payload in entries:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = method
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload)
    return buf.getvalue()


def golden_facts(plan: AppPlan) -> dict:
    launchers = sorted(
        {q for _n, q, launcher in plan.activities if launcher}
        | {q for _n, _t, q, launcher in plan.aliases if launcher}
    )
    all_activities = sorted(
        {q for _n, q, _l in plan.activities} | {q for _n, _t, q, _l in plan.aliases}
    )
    dex_goldens = []
    for i, dex_plan in enumerate(plan.dex_plans):
        name = "classes.dex" if i == 0 else f"classes{i + 1}.dex"
        facts = DexAssembler(dex_plan).golden()
        facts["name"] = name
        dex_goldens.append(facts)
    return {
        "package_id": plan.package,
        "jurisdiction": plan.jurisdiction,
        "version_code": plan.version_code,
        "min_sdk": plan.min_sdk,
        "target_sdk": plan.expected_target_sdk(),
        "declared_permissions": sorted(set(plan.permissions) | set(plan.sdk23_permissions)),
        "sdk23_permissions": sorted(plan.sdk23_permissions),
        "launcher_activities": launchers,
        "all_activities": all_activities,
        "unresolved_count": 1 if plan.unresolved_permission else 0,
        "dex": dex_goldens,
    }


def registry_csv(include_missing: bool = True) -> str:
    lines = ["country,status,package_id,app_name,registry_source"]
    sources = {
        "Indonesia": "OJK",
        "Kenya": "CBK",
        "Nigeria": "FCCPC",
        "Pakistan": "SECP",
        "Philippines": "SEC",
    }
    for plan in APP_PLANS:
        lines.append(
            f"{plan.jurisdiction},{plan.status},{plan.package},"
            f"{plan.package.split('.')[1].title()} Loan,{sources[plan.jurisdiction]}"
        )
    if include_missing:
        lines.append("Kenya,approved,ke.ghost.app,Ghost Loan,CBK")
    return "\n".join(lines) + "\n"


def write_fixtures() -> None:
    apk_dir = FIXTURES / "apks"
    golden_dir = FIXTURES / "golden"
    apk_dir.mkdir(parents=True, exist_ok=True)
    golden_dir.mkdir(parents=True, exist_ok=True)
    for plan in APP_PLANS:
        (apk_dir / f"{plan.package}.apk").write_bytes(apk_bytes(plan))
        (golden_dir / f"{plan.package}.json").write_text(
            json.dumps(golden_facts(plan), indent=2, sort_keys=True) + "\n", "utf-8"
        )
    (FIXTURES / "registry.csv").write_text(registry_csv(), "utf-8")
    # A deliberately corrupt APK for crash-isolation tests (registry row added
    # by tests that need it).
    (apk_dir / "ng.broken.apk.apk").write_bytes(b"PK\x03\x04 not really a zip")

    # Recorded prompt requests for the replay fixtures.
    from lendaudit.mapper import PolicyDocument, render_prompt

    excerpt = (FIXTURES / "policy_excerpt_india.txt").read_text("utf-8")
    doc = PolicyDocument(
        jurisdiction="India",
        title="Digital lending guidelines, technology chapter",
        body_text=excerpt,
        source_citation="Chapter IV, clauses 12-13",
    )
    prompt = render_prompt(doc)
    for model_dir in sorted((FIXTURES / "replay" / "India").iterdir()):
        if model_dir.is_dir():
            (model_dir / "request.txt").write_text(
                prompt.system_text + "\n\n" + prompt.user_text, "utf-8"
            )


if __name__ == "__main__":
    write_fixtures()
    print(f"wrote fixtures for {len(APP_PLANS)} apps under {FIXTURES}")
