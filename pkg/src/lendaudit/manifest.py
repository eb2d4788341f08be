"""Projection of a decoded manifest tree into the fields the audit consumes."""

from __future__ import annotations

from dataclasses import dataclass, field

from .axml import AxmlDocument, AxmlElement, AxmlError, ResourceRef

ANDROID_NS = "http://schemas.android.com/apk/res/android"

ACTION_MAIN = "android.intent.action.MAIN"
CATEGORY_LAUNCHER = "android.intent.category.LAUNCHER"

PERMISSION_ELEMENTS = ("uses-permission", "uses-permission-sdk-23")


class MissingPackageAttribute(AxmlError):
    pass


@dataclass(frozen=True)
class UnresolvedAttribute:
    """android:name given as a resource reference; left unresolved by design."""

    element: str
    resource_id: int


@dataclass(frozen=True)
class ManifestModel:
    package_id: str
    declared_permissions: frozenset[str]
    min_sdk: int
    target_sdk: int
    launcher_activities: frozenset[str]
    all_activities: frozenset[str]
    # uses-permission-sdk-23 declarations are counted above but also flagged
    # distinctly so evidence records can mark them.
    sdk23_permissions: frozenset[str] = frozenset()
    version_code: int | None = None
    unresolved: tuple[UnresolvedAttribute, ...] = field(default=())


def _android_attr(elem: AxmlElement, name: str):
    value = elem.attr(name, ANDROID_NS)
    if value is None:
        value = elem.attr(name)  # tolerate manifests compiled without the namespace
    return value


def _qualify_class(name: str, package_id: str) -> str:
    if name.startswith("."):
        return package_id + name
    if "." not in name:
        return f"{package_id}.{name}"
    return name


def _has_launcher_filter(elem: AxmlElement) -> bool:
    for intent_filter in elem.find_all("intent-filter"):
        actions = {
            _android_attr(a, "name")
            for a in intent_filter.find_all("action")
        }
        categories = {
            _android_attr(c, "name")
            for c in intent_filter.find_all("category")
        }
        if ACTION_MAIN in actions and CATEGORY_LAUNCHER in categories:
            return True
    return False


def extract_manifest(doc: AxmlDocument) -> ManifestModel:
    """Project the manifest tree into package id, permissions, SDK levels and
    launcher activities.

    Permission names are kept fully qualified and compared case-sensitively;
    names given as resource references are recorded as unresolved rather than
    guessed. Missing SDK levels default to min=1, target=min.
    """
    root = doc.root
    package = root.attr("package") if root.name == "manifest" else None
    if not isinstance(package, str) or not package:
        raise MissingPackageAttribute("manifest root carries no usable package attribute")

    declared: set[str] = set()
    sdk23: set[str] = set()
    unresolved: list[UnresolvedAttribute] = []
    for tag in PERMISSION_ELEMENTS:
        for elem in root.find_all(tag):
            name = _android_attr(elem, "name")
            if isinstance(name, str) and name:
                declared.add(name)
                if tag == "uses-permission-sdk-23":
                    sdk23.add(name)
            elif isinstance(name, ResourceRef):
                unresolved.append(UnresolvedAttribute(tag, name.resource_id))

    min_sdk = 1
    target_sdk: int | None = None
    for uses_sdk in root.find_all("uses-sdk"):
        min_value = _android_attr(uses_sdk, "minSdkVersion")
        target_value = _android_attr(uses_sdk, "targetSdkVersion")
        if isinstance(min_value, int):
            min_sdk = min_value
        if isinstance(target_value, int):
            target_sdk = target_value
    if target_sdk is None:
        target_sdk = min_sdk

    activities: set[str] = set()
    launchers: set[str] = set()
    for application in root.find_all("application"):
        for activity in application.find_all("activity"):
            name = _android_attr(activity, "name")
            if isinstance(name, ResourceRef):
                unresolved.append(UnresolvedAttribute("activity", name.resource_id))
                continue
            if not isinstance(name, str) or not name:
                continue
            qualified = _qualify_class(name, package)
            activities.add(qualified)
            if _has_launcher_filter(activity):
                launchers.add(qualified)
        for alias in application.find_all("activity-alias"):
            target = _android_attr(alias, "targetActivity")
            if not isinstance(target, str) or not target:
                continue
            qualified = _qualify_class(target, package)
            # The alias launches its target class; keep the subset invariant.
            activities.add(qualified)
            if _has_launcher_filter(alias):
                launchers.add(qualified)

    version_code = root.attr("versionCode", ANDROID_NS)
    if not isinstance(version_code, int):
        version_code = None

    return ManifestModel(
        package_id=package,
        declared_permissions=frozenset(declared),
        min_sdk=min_sdk,
        target_sdk=target_sdk,
        launcher_activities=frozenset(launchers),
        all_activities=frozenset(activities),
        sdk23_permissions=frozenset(sdk23),
        version_code=version_code,
        unresolved=tuple(unresolved),
    )
