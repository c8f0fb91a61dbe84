#include "flowkit/repair_engine.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

RepairOutcome repair_fences(const ParsedResponse& response) {
    RepairOutcome out;
    out.repaired = response;
    std::string stripped = strip_code_fences(response.workflow_text);
    if (stripped != trim(response.workflow_text)) {
        out.repaired.workflow_text = stripped;
        out.applied.push_back("fence");
        out.changed = true;
    }
    return out;
}

namespace {

// The lenient-JSON stages transform only outside double-quoted strings.
template <typename Fn>
std::string scan_outside_strings(const std::string& s, Fn&& fn) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < s.size();) {
        char c = s[i];
        if (in_string) {
            out += c;
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            ++i;
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            ++i;
            continue;
        }
        std::size_t consumed = fn(s, i, out);
        if (consumed == 0) {
            out += c;
            ++i;
        } else {
            i += consumed;
        }
    }
    return out;
}

std::string remove_trailing_commas(const std::string& s) {
    return scan_outside_strings(s, [](const std::string& text, std::size_t i, std::string&) {
        if (text[i] != ',') return std::size_t(0);
        std::size_t j = i + 1;
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\n' ||
                                   text[j] == '\r'))
            ++j;
        if (j < text.size() && (text[j] == ']' || text[j] == '}')) return j - i;  // drop comma
        return std::size_t(0);
    });
}

std::string single_to_double_quotes(const std::string& s) {
    return scan_outside_strings(s, [](const std::string& text, std::size_t i, std::string& out) {
        if (text[i] != '\'') return std::size_t(0);
        std::size_t j = i + 1;
        std::string content;
        bool closed = false;
        while (j < text.size()) {
            char c = text[j];
            if (c == '\\' && j + 1 < text.size() && text[j + 1] == '\'') {
                content += '\'';
                j += 2;
                continue;
            }
            if (c == '\'') {
                closed = true;
                ++j;
                break;
            }
            content += c;
            ++j;
        }
        if (!closed || content.find('"') != std::string::npos)
            return std::size_t(0);  // ambiguous, leave alone
        std::string escaped;
        for (char c : content) {
            if (c == '\\')
                escaped += "\\\\";
            else if (c == '\n')
                escaped += "\\n";
            else
                escaped += c;
        }
        out += "\"" + escaped + "\"";
        return j - i;
    });
}

bool ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool ident_char(char c) {
    return ident_start(c) || (c >= '0' && c <= '9');
}

std::string quote_bare_keys(const std::string& s) {
    return scan_outside_strings(s, [](const std::string& text, std::size_t i, std::string& out) {
        if (!ident_start(text[i])) return std::size_t(0);
        // a key position follows '{' or ',' (ignoring whitespace)
        std::size_t back = i;
        while (back > 0) {
            char p = text[back - 1];
            if (p == ' ' || p == '\t' || p == '\n' || p == '\r') {
                --back;
                continue;
            }
            if (p != '{' && p != ',') return std::size_t(0);
            break;
        }
        if (back == 0) return std::size_t(0);
        std::size_t j = i;
        while (j < text.size() && ident_char(text[j])) ++j;
        std::size_t k = j;
        while (k < text.size() && (text[k] == ' ' || text[k] == '\t')) ++k;
        if (k >= text.size() || text[k] != ':') return std::size_t(0);
        out += "\"" + text.substr(i, j - i) + "\"";
        return j - i;
    });
}

std::string strip_line_comments(const std::string& s) {
    return scan_outside_strings(s, [](const std::string& text, std::size_t i, std::string&) {
        if (text[i] != '/' || i + 1 >= text.size() || text[i + 1] != '/') return std::size_t(0);
        std::size_t j = i;
        while (j < text.size() && text[j] != '\n') ++j;
        return j - i;
    });
}

}  // namespace

std::string repair_json(const std::string& workflow_text) {
    if (json::accept(workflow_text)) return workflow_text;

    std::string current = workflow_text;
    std::string (*stages[])(const std::string&) = {
        remove_trailing_commas, single_to_double_quotes, quote_bare_keys, strip_line_comments};
    for (auto stage : stages) {
        current = stage(current);
        if (json::accept(current)) return current;
    }
    return workflow_text;
}

namespace {

// Deletes edges between an iteration and its own iteration-start (either
// direction); the legal relationship is containment.
bool drop_entry_pair_edges(WorkflowDoc& doc, const Catalog& catalog) {
    std::map<std::string, const RawNode*> by_id;
    for (const auto& n : doc.nodes_info) by_id[n.id] = &n;
    auto kind_of = [&](const std::string& id) -> const NodeSpec* {
        auto it = by_id.find(id);
        if (it == by_id.end()) return nullptr;
        return catalog.find(it->second->type);
    };
    auto is_pair = [&](const std::string& a, const std::string& b) {
        const NodeSpec* sa = kind_of(a);
        const NodeSpec* sb = kind_of(b);
        if (!sa || !sb) return false;
        if (sa->kind != NodeKind::Iteration || sb->kind != NodeKind::IterationStart) return false;
        const RawNode* entry = by_id[b];
        return entry->parent_id && *entry->parent_id == a;
    };
    auto before = doc.edges.size();
    doc.edges.erase(std::remove_if(doc.edges.begin(), doc.edges.end(),
                                   [&](const RawEdge& e) {
                                       return is_pair(e.source, e.target) ||
                                              is_pair(e.target, e.source);
                                   }),
                    doc.edges.end());
    return doc.edges.size() != before;
}

// Removes every back edge found by a DFS from each scope entry, visiting
// children by ascending port then ascending target id.
bool remove_back_edges(WorkflowDoc& doc, const Catalog& catalog) {
    std::map<std::string, const RawNode*> by_id;
    for (const auto& n : doc.nodes_info) by_id[n.id] = &n;

    std::vector<std::string> roots;
    for (const auto& n : doc.nodes_info) {
        const NodeSpec* spec = catalog.find(n.type);
        if (!spec) continue;
        if (spec->kind == NodeKind::Start && !n.parent_id) roots.push_back(n.id);
        if (spec->kind == NodeKind::IterationStart && n.parent_id) roots.push_back(n.id);
    }
    std::sort(roots.begin(), roots.end(), [](const std::string& a, const std::string& b) {
        return id_less(a, b);
    });

    std::set<std::size_t> to_remove;
    std::set<std::string> visited;
    std::set<std::string> on_stack;

    // ordered outgoing edge indices per node
    std::map<std::string, std::vector<std::size_t>> outgoing;
    for (std::size_t i = 0; i < doc.edges.size(); ++i)
        outgoing[doc.edges[i].source].push_back(i);
    for (auto& [id, idxs] : outgoing) {
        (void)id;
        std::sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            const RawEdge& ea = doc.edges[a];
            const RawEdge& eb = doc.edges[b];
            if (ea.port != eb.port) return ea.port < eb.port;
            return id_less(ea.target, eb.target);
        });
    }

    auto dfs = [&](const std::string& root, auto&& self) -> void {
        if (visited.count(root)) return;
        visited.insert(root);
        on_stack.insert(root);
        for (std::size_t idx : outgoing[root]) {
            const std::string& next = doc.edges[idx].target;
            if (on_stack.count(next)) {
                to_remove.insert(idx);  // back edge closes a cycle
                continue;
            }
            if (!visited.count(next)) self(next, self);
        }
        on_stack.erase(root);
    };
    for (const auto& root : roots) dfs(root, dfs);

    if (to_remove.empty()) return false;
    WorkflowDoc next;
    next.nodes_info = doc.nodes_info;
    for (std::size_t i = 0; i < doc.edges.size(); ++i)
        if (!to_remove.count(i)) next.edges.push_back(doc.edges[i]);
    doc = std::move(next);
    return true;
}

}  // namespace

WorkflowDoc repair_topology(const WorkflowDoc& doc, const Catalog& catalog) {
    WorkflowDoc current = doc;
    std::string last_error;
    for (int pass = 0; pass < 3; ++pass) {
        try {
            build(current, catalog);
            return current;
        } catch (const BuildError& e) {
            last_error = e.what();
            bool changed = false;
            if (e.error_class() == BuildErrorClass::ContainmentViolation)
                changed = drop_entry_pair_edges(current, catalog);
            else if (e.error_class() == BuildErrorClass::CycleDetected)
                changed = remove_back_edges(current, catalog);
            if (!changed) throw UnrepairableError(last_error);
        }
    }
    try {
        build(current, catalog);
        return current;
    } catch (const BuildError& e) {
        throw UnrepairableError(e.what());
    }
}

RepairOutcome repair_node_selection(const ParsedResponse& response, const Catalog& catalog) {
    RepairOutcome out;
    out.repaired = response;
    if (!response.workflow_doc) return out;

    std::set<std::string> actual;
    for (const auto& n : response.workflow_doc->nodes_info)
        if (const NodeSpec* spec = catalog.find(n.type)) actual.insert(kind_id(spec->kind));

    std::set<std::string> declared;
    for (const auto& token : response.node_selection) {
        if (const NodeSpec* spec = catalog.find(token))
            declared.insert(kind_id(spec->kind));
        else
            declared.insert(to_lower(trim(token)));
    }

    if (declared != actual) {
        out.repaired.node_selection.assign(actual.begin(), actual.end());
        out.applied.push_back("node-selection");
        out.changed = true;
    }
    return out;
}

json AttemptRecord::to_json() const {
    json repairs_json = json::array();
    for (const auto& r : repairs) repairs_json.push_back(r);
    return json{{"attempt", index}, {"repairs", repairs_json}, {"stage", stage},
                {"detail", detail}};
}

std::string AttemptRecord::to_line() const {
    return to_json().dump();
}

AttemptOutcome process_attempt(const std::string& raw_response, const Catalog& catalog,
                               const VerifyFn& verify) {
    AttemptOutcome out;
    auto add_repair = [&](const char* id) {
        if (std::find(out.repairs.begin(), out.repairs.end(), id) == out.repairs.end())
            out.repairs.push_back(id);
    };

    // 1. section extraction, retrying once with the outer fence removed
    try {
        out.response = extract_sections(raw_response);
    } catch (const ParseError& first) {
        std::string stripped = strip_code_fences(raw_response);
        if (stripped == trim(raw_response)) {
            out.stage = "format";
            out.detail = first.what();
            return out;
        }
        try {
            out.response = extract_sections(stripped);
            add_repair("fence");
        } catch (const ParseError& second) {
            out.stage = "format";
            out.detail = second.what();
            return out;
        }
    }

    // 2. workflow-section fences
    RepairOutcome fenced = repair_fences(out.response);
    if (fenced.changed) {
        out.response = fenced.repaired;
        add_repair("fence");
    }

    // 3. strict decode, then lenient repair
    try {
        out.response.workflow_doc = decode_workflow(out.response.workflow_text);
    } catch (const ParseError& e) {
        if (e.kind() != ParseError::Kind::JsonSyntax) {
            out.stage = "format";
            out.detail = e.what();
            return out;
        }
        std::string repaired = repair_json(strip_code_fences(out.response.workflow_text));
        try {
            out.response.workflow_doc = decode_workflow(repaired);
            out.response.workflow_text = repaired;
            add_repair("json");
        } catch (const ParseError& again) {
            out.stage = "format";
            out.detail = again.what();
            return out;
        }
    }

    // 4. structural admission, then topology repair
    try {
        build(*out.response.workflow_doc, catalog);
    } catch (const BuildError& e) {
        if (e.error_class() != BuildErrorClass::CycleDetected &&
            e.error_class() != BuildErrorClass::ContainmentViolation) {
            out.stage = "structure";
            out.detail = e.what();
            return out;
        }
        try {
            WorkflowDoc repaired = repair_topology(*out.response.workflow_doc, catalog);
            out.response.workflow_doc = repaired;
            out.response.workflow_text = repaired.dump();
            add_repair("topology");
        } catch (const UnrepairableError& u) {
            out.stage = "structure";
            out.detail = u.what();
            return out;
        }
    }

    // 5. node-selection consistency (the workflow wins)
    RepairOutcome selection = repair_node_selection(out.response, catalog);
    if (selection.changed) {
        out.response = selection.repaired;
        add_repair("node-selection");
    }

    // 6. full verification
    VerifyOutcome verdict = verify(out.response);
    if (verdict.ok) {
        out.ok = true;
        out.stage = "verified";
    } else {
        out.stage = verdict.failing_stage.empty() ? "verification" : verdict.failing_stage;
        out.detail = verdict.detail;
    }
    return out;
}

RetryResult verified_retry(const GenerateFn& generate, const Catalog& catalog,
                           const VerifyFn& verify, RetryOptions options) {
    RetryResult result;
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        const AttemptRecord* prior = result.log.empty() ? nullptr : &result.log.back();
        std::string raw = generate(attempt, prior);
        AttemptOutcome outcome = process_attempt(raw, catalog, verify);
        result.log.push_back({attempt, outcome.repairs,
                              outcome.ok ? std::string("verified") : outcome.stage,
                              outcome.detail});
        result.response = outcome.response;
        if (outcome.ok) {
            result.verified = true;
            return result;
        }
    }
    return result;
}

}  // namespace flowkit
