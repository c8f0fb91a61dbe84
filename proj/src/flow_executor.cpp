#include "flowkit/flow_executor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flowkit/util.hpp"

namespace flowkit {

using nlohmann::json;

namespace {

std::string exec_kind_name(ExecError::Kind k) {
    switch (k) {
        case ExecError::Kind::HandlerError: return "HandlerError";
        case ExecError::Kind::LimitExceeded: return "LimitExceeded";
        case ExecError::Kind::InputMismatch: return "InputMismatch";
        case ExecError::Kind::UnboundToken: return "UnboundToken";
        case ExecError::Kind::TypeMismatch: return "TypeMismatch";
        case ExecError::Kind::ScriptMissing: return "ScriptMissing";
    }
    return "ExecError";
}

}  // namespace

ExecError::ExecError(Kind kind, std::string node_id, const std::string& message)
    : Error(exec_kind_name(kind),
            node_id.empty() ? message : "node " + node_id + ": " + message),
      kind_(kind),
      node_id_(std::move(node_id)) {}

TypedValue TypedValue::string_value(std::string s) {
    TypedValue v;
    v.type = VarType::string();
    v.data = std::move(s);
    return v;
}

TypedValue TypedValue::number_value(double d) {
    TypedValue v;
    v.type = VarType::number();
    v.data = d;
    return v;
}

TypedValue TypedValue::boolean_value(bool b) {
    TypedValue v;
    v.type = VarType::boolean();
    v.data = b;
    return v;
}

TypedValue TypedValue::object_value(json obj) {
    TypedValue v;
    v.type = VarType::object();
    v.data = std::move(obj);
    return v;
}

TypedValue TypedValue::array_value(ScalarType elem, json items) {
    TypedValue v;
    v.type = VarType::array_of(elem);
    v.data = std::move(items);
    return v;
}

TypedValue TypedValue::file_value(FileValue file) {
    TypedValue v;
    v.type = VarType::file();
    v.data = nullptr;
    v.files.push_back(std::move(file));
    return v;
}

TypedValue TypedValue::file_array_value(std::vector<FileValue> files) {
    TypedValue v;
    v.type = VarType::array_of(ScalarType::File);
    v.data = nullptr;
    v.files = std::move(files);
    return v;
}

std::size_t TypedValue::array_size() const {
    if (!type.is_array) return 0;
    if (type.elem == ScalarType::File) return files.size();
    return data.is_array() ? data.size() : 0;
}

TypedValue TypedValue::element_at(std::size_t i) const {
    if (type.elem == ScalarType::File) return file_value(files.at(i));
    TypedValue v;
    v.type = VarType{type.elem, false};
    v.data = data.at(i);
    return v;
}

std::string TypedValue::render() const {
    if (type.is_array) {
        std::string out;
        for (std::size_t i = 0; i < array_size(); ++i) {
            if (i) out += "\n";
            out += element_at(i).render();
        }
        return out;
    }
    switch (type.elem) {
        case ScalarType::String: return data.is_string() ? data.get<std::string>() : data.dump();
        case ScalarType::Number: return format_number(data.get<double>());
        case ScalarType::Boolean: return data.get<bool>() ? "true" : "false";
        case ScalarType::Object: return data.dump();
        case ScalarType::File: return files.empty() ? "" : files.front().name;
    }
    return "";
}

namespace {

json file_to_json(const FileValue& f) {
    json j = {{"name", f.name},
              {"extension", f.extension},
              {"media_kind", f.media_kind},
              {"byte_length", f.byte_length}};
    if (f.bytes) j["bytes"] = *f.bytes;
    return j;
}

FileValue file_from_json(const json& j) {
    FileValue f;
    if (j.is_string()) {
        f.name = j.get<std::string>();
        auto dot = f.name.find_last_of('.');
        f.extension = dot == std::string::npos ? "" : f.name.substr(dot);
        f.media_kind = media_kind_for_extension(f.extension);
        return f;
    }
    if (j.contains("name")) f.name = j["name"].get<std::string>();
    if (j.contains("extension"))
        f.extension = j["extension"].get<std::string>();
    else {
        auto dot = f.name.find_last_of('.');
        if (dot != std::string::npos) f.extension = f.name.substr(dot);
    }
    f.media_kind = j.contains("media_kind") ? j["media_kind"].get<std::string>()
                                            : media_kind_for_extension(f.extension);
    if (j.contains("byte_length")) f.byte_length = j["byte_length"].get<std::uint64_t>();
    if (j.contains("bytes")) f.bytes = j["bytes"].get<std::string>();
    return f;
}

}  // namespace

json TypedValue::to_json() const {
    json value;
    if (type.elem == ScalarType::File) {
        if (type.is_array) {
            value = json::array();
            for (const auto& f : files) value.push_back(file_to_json(f));
        } else {
            value = files.empty() ? json(nullptr) : file_to_json(files.front());
        }
    } else {
        value = data;
    }
    return json{{"type", type.to_string()}, {"value", value}};
}

TypedValue TypedValue::from_json(const json& j) {
    if (!j.is_object() || !j.contains("type") || !j.contains("value"))
        throw ExecError(ExecError::Kind::TypeMismatch, "",
                        "typed values need {type, value} fields");
    auto type = VarType::parse(j["type"].get<std::string>());
    if (!type)
        throw ExecError(ExecError::Kind::TypeMismatch, "",
                        "unknown value type '" + j["type"].get<std::string>() + "'");
    const json& value = j["value"];
    TypedValue v;
    v.type = *type;
    if (type->elem == ScalarType::File) {
        if (type->is_array) {
            for (const auto& item : value) v.files.push_back(file_from_json(item));
        } else {
            v.files.push_back(file_from_json(value));
        }
        v.data = nullptr;
    } else {
        v.data = value;
    }
    return v;
}

void VarStore::put(const std::string& node_id, const std::string& var, TypedValue value) {
    auto key = std::make_pair(node_id, var);
    if (values_.count(key))
        throw ExecError(ExecError::Kind::HandlerError, node_id,
                        "variable '" + var + "' written twice");
    values_.emplace(std::move(key), std::move(value));
}

const TypedValue* VarStore::find(const std::string& node_id, const std::string& var) const {
    auto it = values_.find({node_id, var});
    if (it != values_.end()) return &it->second;
    if (parent_) return parent_->find(node_id, var);
    return nullptr;
}

std::string TraceEvent::to_line() const {
    switch (kind) {
        case Kind::NodeEnter: return "enter " + node_id;
        case Kind::NodeExit: return "exit " + node_id + (detail.empty() ? "" : " " + detail);
        case Kind::BranchTaken: return "branch " + node_id + " port " + std::to_string(port);
        case Kind::IterationItem:
            return "item " + node_id + " index " + std::to_string(index);
        case Kind::Error: return "error " + node_id + " " + detail;
    }
    return "";
}

std::string media_kind_for_extension(const std::string& extension) {
    std::string e = to_lower(extension);
    if (e == ".png" || e == ".svg" || e == ".jpg" || e == ".jpeg" || e == ".gif") return "image";
    if (e == ".mp3" || e == ".wav" || e == ".ogg") return "audio";
    if (e == ".pdf" || e == ".md" || e == ".docx" || e == ".html" || e == ".txt")
        return "document";
    return "other";
}

void ScriptTable::add(const std::string& node_id, const std::string& raw_input, json output) {
    entries_[{node_id, digest(raw_input)}] = std::move(output);
}

void ScriptTable::add_digest(const std::string& node_id, const std::string& d, json output) {
    entries_[{node_id, d}] = std::move(output);
}

void ScriptTable::merge(const ScriptTable& other) {
    for (const auto& [key, output] : other.entries_) entries_[key] = output;
}

const json* ScriptTable::find(const std::string& node_id, const std::string& raw_input) const {
    auto it = entries_.find({node_id, digest(raw_input)});
    if (it == entries_.end()) return nullptr;
    return &it->second;
}

std::string ScriptTable::digest(const std::string& raw_input) {
    return fnv1a64_hex(raw_input);
}

ScriptTable ScriptTable::from_json(const json& doc) {
    ScriptTable table;
    const json& items = doc.is_array() ? doc : doc.at("scripts");
    for (const auto& item : items) {
        std::string node_id = item.at("node_id").is_string()
                                  ? item.at("node_id").get<std::string>()
                                  : std::to_string(item.at("node_id").get<long long>());
        if (item.contains("digest"))
            table.add_digest(node_id, item.at("digest").get<std::string>(), item.at("output"));
        else
            table.add(node_id, item.at("input").get<std::string>(), item.at("output"));
    }
    return table;
}

std::string render_template(
    const std::string& text,
    const std::function<const TypedValue*(const VarRefToken&)>& lookup) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{#", pos);
        if (open == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        auto close = text.find("#}}", open + 3);
        if (close == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        std::string token = text.substr(open, close + 3 - open);
        auto ref = parse_var_ref(token);
        if (!ref) {
            out += text.substr(pos, open + 3 - pos);
            pos = open + 3;
            continue;
        }
        const TypedValue* value = lookup(*ref);
        if (!value)
            throw ExecError(ExecError::Kind::UnboundToken, "",
                            "unbound variable reference " + token);
        out += text.substr(pos, open - pos);
        out += value->render();
        pos = close + 3;
    }
    return out;
}

bool evaluate_condition(const json& branch,
                        const std::function<TypedValue(const VarRefToken&)>& resolve) {
    std::string combinator = "and";
    if (branch.is_object() && branch.contains("operator") && branch["operator"].is_string())
        combinator = branch["operator"].get<std::string>();

    auto eval_rule = [&](const json& rule) -> bool {
        auto ref = parse_var_ref(rule.at("left").get<std::string>());
        if (!ref)
            throw ExecError(ExecError::Kind::TypeMismatch, "",
                            "condition left operand must be a variable reference");
        TypedValue left = resolve(*ref);
        std::string op = normalize_comparator(rule.at("op").get<std::string>());

        auto right_string = [&]() -> std::string {
            const json& r = rule.at("right");
            if (r.is_string()) return r.get<std::string>();
            if (r.is_number()) return format_number(r.get<double>());
            if (r.is_boolean()) return r.get<bool>() ? "true" : "false";
            throw ExecError(ExecError::Kind::TypeMismatch, "", "unsupported right operand");
        };
        auto right_number = [&]() -> double {
            const json& r = rule.at("right");
            if (r.is_number()) return r.get<double>();
            if (r.is_string()) {
                try {
                    std::size_t used = 0;
                    double v = std::stod(r.get<std::string>(), &used);
                    if (used == r.get<std::string>().size()) return v;
                } catch (...) {
                }
            }
            throw ExecError(ExecError::Kind::TypeMismatch, "",
                            "numeric comparison needs a numeric right operand");
        };

        if (left.type.is_array) {
            if (op == "is-empty") return left.array_size() == 0;
            if (op == "contains") {
                std::string needle = right_string();
                for (std::size_t i = 0; i < left.array_size(); ++i)
                    if (left.element_at(i).render() == needle) return true;
                return false;
            }
            throw ExecError(ExecError::Kind::TypeMismatch, "",
                            "comparator '" + op + "' does not apply to lists");
        }
        if (left.type.elem == ScalarType::Number) {
            double l = left.data.get<double>();
            if (op == "=") return l == right_number();
            if (op == "!=") return l != right_number();
            if (op == "<") return l < right_number();
            if (op == "<=") return l <= right_number();
            if (op == ">") return l > right_number();
            if (op == ">=") return l >= right_number();
            throw ExecError(ExecError::Kind::TypeMismatch, "",
                            "comparator '" + op + "' does not apply to numbers");
        }
        if (left.type.elem == ScalarType::String || left.type.elem == ScalarType::Boolean) {
            std::string l = left.render();
            if (op == "equals") return l == right_string();
            if (op == "contains") return l.find(right_string()) != std::string::npos;
            if (op == "starts-with") return l.rfind(right_string(), 0) == 0;
            if (op == "is-empty") return l.empty();
            if (op == "not-empty") return !l.empty();
            throw ExecError(ExecError::Kind::TypeMismatch, "",
                            "comparator '" + op + "' does not apply to text");
        }
        throw ExecError(ExecError::Kind::TypeMismatch, "",
                        "conditions do not apply to " + left.type.to_string());
    };

    const json& rules = branch.at("rules");
    if (combinator == "or") {
        for (const auto& rule : rules)
            if (eval_rule(rule)) return true;
        return false;
    }
    for (const auto& rule : rules)
        if (!eval_rule(rule)) return false;
    return true;
}

json ExecContext::params() const {
    return catalog_.canonical_params(catalog_.spec(node_.kind), node_.params);
}

const TypedValue& ExecContext::resolve(const VarRefToken& ref) const {
    const TypedValue* v = store_.find(ref.node_id, ref.var_name);
    if (!v)
        throw ExecError(ExecError::Kind::UnboundToken, node_.id,
                        "unbound variable reference " + ref.render());
    return *v;
}

TypedValue ExecContext::resolve_token_param(const std::string& key) const {
    const json& p = node_.params;
    if (!p.contains(key) || !p[key].is_string())
        throw ExecError(ExecError::Kind::HandlerError, node_.id,
                        "param '" + key + "' is missing");
    auto ref = parse_var_ref(p[key].get<std::string>());
    if (!ref)
        throw ExecError(ExecError::Kind::HandlerError, node_.id,
                        "param '" + key + "' is not a variable reference");
    return resolve(*ref);
}

std::string ExecContext::render(const std::string& text) const {
    try {
        return render_template(
            text, [&](const VarRefToken& ref) { return store_.find(ref.node_id, ref.var_name); });
    } catch (ExecError& e) {
        if (e.exec_kind() == ExecError::Kind::UnboundToken)
            throw ExecError(ExecError::Kind::UnboundToken, node_.id, e.what());
        throw;
    }
}

std::string ExecContext::render_param(const std::string& key) const {
    json p = params();
    if (!p.contains(key)) return "";
    if (p[key].is_string()) return render(p[key].get<std::string>());
    return p[key].dump();
}

const json* ExecContext::script_output(const std::string& raw_input) const {
    return registry_.scripts.find(node_.id, raw_input);
}

namespace {

// ---------------------------------------------------------------------------
// Minimal expression evaluator for the code node: arithmetic, string concat,
// array index and len(); anything richer must come from the script table.
// ---------------------------------------------------------------------------
class ExprEval {
public:
    ExprEval(std::string_view text, const ExecContext& ctx) : text_(text), ctx_(ctx) {}

    TypedValue run() {
        TypedValue v = parse_expr();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing characters in expression");
        return v;
    }

private:
    std::string_view text_;
    const ExecContext& ctx_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ExecError(ExecError::Kind::HandlerError, ctx_.node().id,
                        "script error: " + msg);
    }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                       text_[pos_] == '\n' || text_[pos_] == '\r'))
            ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    TypedValue parse_expr() {
        TypedValue v = parse_term();
        while (true) {
            if (consume('+')) {
                TypedValue r = parse_term();
                if (v.type == VarType::number() && r.type == VarType::number())
                    v = TypedValue::number_value(v.data.get<double>() + r.data.get<double>());
                else
                    v = TypedValue::string_value(v.render() + r.render());
            } else if (consume('-')) {
                TypedValue r = parse_term();
                require_number(v);
                require_number(r);
                v = TypedValue::number_value(v.data.get<double>() - r.data.get<double>());
            } else {
                return v;
            }
        }
    }

    TypedValue parse_term() {
        TypedValue v = parse_postfix();
        while (true) {
            if (consume('*')) {
                TypedValue r = parse_postfix();
                require_number(v);
                require_number(r);
                v = TypedValue::number_value(v.data.get<double>() * r.data.get<double>());
            } else if (consume('/')) {
                TypedValue r = parse_postfix();
                require_number(v);
                require_number(r);
                if (r.data.get<double>() == 0.0) fail("division by zero");
                v = TypedValue::number_value(v.data.get<double>() / r.data.get<double>());
            } else {
                return v;
            }
        }
    }

    TypedValue parse_postfix() {
        TypedValue v = parse_primary();
        while (peek() == '[') {
            consume('[');
            TypedValue idx = parse_expr();
            if (!consume(']')) fail("expected ']'");
            require_number(idx);
            double d = idx.data.get<double>();
            if (d < 0 || d != std::floor(d)) fail("index must be a non-negative integer");
            auto i = static_cast<std::size_t>(d);
            if (!v.type.is_array) fail("indexing a non-list value");
            if (i >= v.array_size()) fail("index out of range");
            v = v.element_at(i);
        }
        return v;
    }

    TypedValue parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            TypedValue v = parse_expr();
            if (!consume(')')) fail("expected ')'");
            return v;
        }
        if (c == '"' || c == '\'') return parse_string(c);
        if (text_.substr(pos_).rfind("{{#", 0) == 0) return parse_ref();
        if (text_.substr(pos_, 4) == "len(" ||
            (text_.substr(pos_, 3) == "len" && peek_after(3) == '(')) {
            pos_ += 3;
            if (!consume('(')) fail("expected '(' after len");
            TypedValue v = parse_expr();
            if (!consume(')')) fail("expected ')'");
            if (v.type.is_array) return TypedValue::number_value(double(v.array_size()));
            return TypedValue::number_value(double(v.render().size()));
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        fail(std::string("unexpected character '") + c + "'");
    }

    char peek_after(std::size_t n) {
        std::size_t p = pos_ + n;
        while (p < text_.size() && text_[p] == ' ') ++p;
        return p < text_.size() ? text_[p] : '\0';
    }

    TypedValue parse_string(char quote) {
        ++pos_;
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != quote) {
            if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
                ++pos_;
                char e = text_[pos_];
                out += (e == 'n' ? '\n' : e == 't' ? '\t' : e);
            } else {
                out += text_[pos_];
            }
            ++pos_;
        }
        if (pos_ >= text_.size()) fail("unterminated string literal");
        ++pos_;
        return TypedValue::string_value(out);
    }

    TypedValue parse_number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               ((text_[pos_] >= '0' && text_[pos_] <= '9') || text_[pos_] == '.'))
            ++pos_;
        try {
            return TypedValue::number_value(std::stod(std::string(text_.substr(start, pos_ - start))));
        } catch (...) {
            fail("malformed number");
        }
    }

    TypedValue parse_ref() {
        auto close = text_.find("#}}", pos_);
        if (close == std::string_view::npos) fail("unterminated variable reference");
        std::string token(text_.substr(pos_, close + 3 - pos_));
        auto ref = parse_var_ref(token);
        if (!ref) fail("malformed variable reference " + token);
        pos_ = close + 3;
        return ctx_.resolve(*ref);
    }

    void require_number(const TypedValue& v) const {
        if (v.type != VarType::number()) fail("expected a number operand");
    }
};

TypedValue coerce_to_type(const VarType& want, const json& raw, const std::string& node_id) {
    if (want.elem == ScalarType::File) {
        if (want.is_array) {
            std::vector<FileValue> files;
            for (const auto& item : raw) files.push_back(file_from_json(item));
            return TypedValue::file_array_value(std::move(files));
        }
        return TypedValue::file_value(file_from_json(raw));
    }
    TypedValue v;
    v.type = want;
    if (want.is_array) {
        if (!raw.is_array())
            throw ExecError(ExecError::Kind::HandlerError, node_id,
                            "scripted output expected a list");
        v.data = raw;
        return v;
    }
    switch (want.elem) {
        case ScalarType::String:
            v.data = raw.is_string() ? raw.get<std::string>() : raw.dump();
            break;
        case ScalarType::Number:
            if (!raw.is_number())
                throw ExecError(ExecError::Kind::HandlerError, node_id,
                                "scripted output expected a number");
            v.data = raw.get<double>();
            break;
        case ScalarType::Boolean:
            if (!raw.is_boolean())
                throw ExecError(ExecError::Kind::HandlerError, node_id,
                                "scripted output expected a boolean");
            v.data = raw.get<bool>();
            break;
        case ScalarType::Object:
            if (!raw.is_object())
                throw ExecError(ExecError::Kind::HandlerError, node_id,
                                "scripted output expected an object");
            v.data = raw;
            break;
        case ScalarType::File:
            break;  // handled above
    }
    return v;
}

std::map<std::string, TypedValue> outputs_from_script(const ExecContext& ctx, const json& out) {
    std::map<std::string, TypedValue> result;
    for (const auto& [name, type] : ctx.graph().outputs_of(ctx.node().id)) {
        if (!out.contains(name)) continue;
        VarType want = type.value_or(VarType::string());
        result[name] = coerce_to_type(want, out[name], ctx.node().id);
    }
    return result;
}

std::map<std::string, TypedValue> scripted_or(
    ExecContext& ctx, const std::string& digest_input,
    const std::function<std::map<std::string, TypedValue>()>& fallback) {
    if (const json* out = ctx.script_output(digest_input)) return outputs_from_script(ctx, *out);
    if (ctx.strict_scripts())
        throw ExecError(ExecError::Kind::ScriptMissing, ctx.node().id,
                        "no script entry for input digest " + ScriptTable::digest(digest_input));
    return fallback();
}

std::map<std::string, TypedValue> handle_llm(ExecContext& ctx) {
    json p = ctx.params();
    std::string system = p.value("system_prompt", std::string());
    std::string prompt = ctx.render(p.value("prompt", std::string()));
    std::string input = system.empty() ? prompt : ctx.render(system) + "\n\n" + prompt;
    return scripted_or(ctx, input, [&] {
        return std::map<std::string, TypedValue>{{"text", TypedValue::string_value(input)}};
    });
}

std::map<std::string, TypedValue> handle_classifier(ExecContext& ctx) {
    std::string query = ctx.resolve_token_param("query").render();
    json p = ctx.params();
    std::vector<std::string> classes;
    for (const auto& c : p["classes"]) classes.push_back(c.get<std::string>());

    std::size_t index = 0;
    if (const json* out = ctx.script_output(query)) {
        if (out->contains("class_index")) {
            index = out->at("class_index").get<std::size_t>();
        } else if (out->contains("class_name")) {
            std::string name = out->at("class_name").get<std::string>();
            auto it = std::find(classes.begin(), classes.end(), name);
            if (it == classes.end())
                throw ExecError(ExecError::Kind::HandlerError, ctx.node().id,
                                "scripted class '" + name + "' is not declared");
            index = static_cast<std::size_t>(it - classes.begin());
        }
    } else if (ctx.strict_scripts()) {
        throw ExecError(ExecError::Kind::ScriptMissing, ctx.node().id,
                        "no script entry for classifier query");
    }
    if (index >= classes.size())
        throw ExecError(ExecError::Kind::HandlerError, ctx.node().id,
                        "class index out of range");
    return {{"class_name", TypedValue::string_value(classes[index])},
            {"__port", TypedValue::number_value(double(index))}};
}

std::map<std::string, TypedValue> handle_code(ExecContext& ctx) {
    std::string script = ctx.node().params.value("script", std::string());
    std::string digest_input = ctx.render(script);
    if (const json* out = ctx.script_output(digest_input)) return outputs_from_script(ctx, *out);

    const auto& declared = ctx.graph().outputs_of(ctx.node().id);
    if (declared.size() != 1)
        throw ExecError(ExecError::Kind::HandlerError, ctx.node().id,
                        "multi-output code nodes need a script table entry");
    TypedValue value = ExprEval(script, ctx).run();
    VarType want = declared.front().second.value_or(VarType::string());
    std::map<std::string, TypedValue> out;
    if (want == value.type) {
        out[declared.front().first] = value;
    } else if (want == VarType::string()) {
        out[declared.front().first] = TypedValue::string_value(value.render());
    } else {
        throw ExecError(ExecError::Kind::HandlerError, ctx.node().id,
                        "expression yields " + value.type.to_string() + ", node declares " +
                            want.to_string());
    }
    return out;
}

std::map<std::string, TypedValue> handle_document_extractor(ExecContext& ctx) {
    TypedValue file = ctx.resolve_token_param("file");
    std::string name = file.render();
    return scripted_or(ctx, name, [&] {
        std::string text;
        if (!file.files.empty() && file.files.front().bytes)
            text = *file.files.front().bytes;
        else
            text = "contents of " + name;
        return std::map<std::string, TypedValue>{{"text", TypedValue::string_value(text)}};
    });
}

std::map<std::string, TypedValue> handle_http(ExecContext& ctx) {
    json p = ctx.params();
    std::string url = ctx.render(p.value("url", std::string()));
    std::string method = p.value("method", std::string("GET"));
    std::string body = ctx.render(p.value("body", std::string()));
    std::string input = method + " " + url + (body.empty() ? "" : "\n" + body);
    return scripted_or(ctx, input, [&] {
        return std::map<std::string, TypedValue>{
            {"body", TypedValue::string_value("response from " + url)},
            {"status_code", TypedValue::number_value(200)}};
    });
}

std::map<std::string, TypedValue> handle_template(ExecContext& ctx) {
    return {{"output",
             TypedValue::string_value(ctx.render(ctx.node().params.value("template", std::string())))}};
}

std::map<std::string, TypedValue> handle_aggregator(ExecContext& ctx) {
    const json& vars = ctx.node().params["variables"];
    for (const auto& v : vars) {
        auto ref = parse_var_ref(v.get<std::string>());
        if (!ref) continue;
        try {
            return {{"output", ctx.resolve(*ref)}};
        } catch (const ExecError&) {
            continue;  // producer skipped on an untaken branch
        }
    }
    throw ExecError(ExecError::Kind::HandlerError, ctx.node().id,
                    "no aggregator input is available");
}

std::map<std::string, TypedValue> handle_list_operator(ExecContext& ctx) {
    TypedValue list = ctx.resolve_token_param("list");
    if (!list.type.is_array)
        throw ExecError(ExecError::Kind::TypeMismatch, ctx.node().id,
                        "list-operator input is not a list");
    json p = ctx.params();
    std::string op = p.value("operation", std::string("identity"));

    std::vector<TypedValue> items;
    for (std::size_t i = 0; i < list.array_size(); ++i) items.push_back(list.element_at(i));

    if (op == "limit") {
        auto n = static_cast<std::size_t>(p.value("count", 0.0));
        if (items.size() > n) items.resize(n);
    } else if (op == "reverse") {
        std::reverse(items.begin(), items.end());
    } else if (op == "sort") {
        std::stable_sort(items.begin(), items.end(), [](const TypedValue& a, const TypedValue& b) {
            if (a.type == VarType::number() && b.type == VarType::number())
                return a.data.get<double>() < b.data.get<double>();
            return a.render() < b.render();
        });
    }

    TypedValue result;
    if (list.type.elem == ScalarType::File) {
        std::vector<FileValue> files;
        for (const auto& item : items) files.push_back(item.files.front());
        result = TypedValue::file_array_value(std::move(files));
    } else {
        json arr = json::array();
        for (const auto& item : items) arr.push_back(item.data);
        result = TypedValue::array_value(list.type.elem, std::move(arr));
    }

    std::map<std::string, TypedValue> out{{"result", result}};
    if (!items.empty()) {
        out["first_record"] = items.front();
        out["last_record"] = items.back();
    }
    return out;
}

std::map<std::string, TypedValue> handle_extractor(ExecContext& ctx) {
    std::string input = ctx.resolve_token_param("input").render();
    json p = ctx.params();
    std::string instruction = p.value("instruction", std::string());
    std::string digest_input = instruction.empty() ? input : input + "\n" + instruction;
    return scripted_or(ctx, digest_input, [&] {
        std::map<std::string, TypedValue> out;
        for (const auto& [name, type] : ctx.graph().outputs_of(ctx.node().id)) {
            VarType t = type.value_or(VarType::string());
            if (t.is_array)
                out[name] = t.elem == ScalarType::File
                                ? TypedValue::file_array_value({})
                                : TypedValue::array_value(t.elem, json::array());
            else if (t.elem == ScalarType::Number)
                out[name] = TypedValue::number_value(0);
            else if (t.elem == ScalarType::Boolean)
                out[name] = TypedValue::boolean_value(false);
            else if (t.elem == ScalarType::Object)
                out[name] = TypedValue::object_value(json::object());
            else
                out[name] = TypedValue::string_value("");
        }
        return out;
    });
}

std::map<std::string, TypedValue> handle_google_search(ExecContext& ctx) {
    std::string query = ctx.render_param("query");
    return scripted_or(ctx, query, [&] {
        return std::map<std::string, TypedValue>{
            {"result", TypedValue::string_value("search results for: " + query)}};
    });
}

std::map<std::string, TypedValue> handle_echarts(ExecContext& ctx) {
    json p = ctx.params();
    json config = {{"type", p.value("chart_type", std::string("bar"))},
                   {"title", ctx.render(p.value("title", std::string()))},
                   {"data", ctx.render(p.value("data", std::string()))}};
    return {{"result", TypedValue::string_value(config.dump())}};
}

std::map<std::string, TypedValue> synth_file(const std::string& name, const std::string& ext,
                                             std::uint64_t length) {
    FileValue f;
    f.name = name;
    f.extension = ext;
    f.media_kind = media_kind_for_extension(ext);
    f.byte_length = length;
    return {{"file", TypedValue::file_value(std::move(f))}};
}

std::map<std::string, TypedValue> handle_tts(ExecContext& ctx) {
    std::string text = ctx.render_param("text");
    return synth_file("speech.mp3", ".mp3", 1000 + 100 * text.size());
}

std::map<std::string, TypedValue> handle_tti(ExecContext& ctx) {
    (void)ctx.render_param("prompt");
    return synth_file("image.png", ".png", 204800);
}

std::map<std::string, TypedValue> handle_mermaid(ExecContext& ctx) {
    json p = ctx.params();
    std::string format = p.value("format", std::string("png"));
    (void)ctx.render_param("code");
    return synth_file("diagram." + format, "." + format, 51200);
}

std::map<std::string, TypedValue> handle_markdown_exporter(ExecContext& ctx) {
    json p = ctx.params();
    std::string format = p.value("format", std::string("md"));
    std::string markdown = ctx.render_param("markdown");
    return synth_file("export." + format, "." + format, 512 + markdown.size());
}

std::map<std::string, TypedValue> handle_noop(ExecContext&) { return {}; }

}  // namespace

HandlerRegistry default_test_handlers() {
    HandlerRegistry registry;
    auto& h = registry.handlers;
    h[NodeKind::Start] = handle_noop;
    h[NodeKind::End] = handle_noop;
    h[NodeKind::IfElse] = handle_noop;
    h[NodeKind::Iteration] = handle_noop;
    h[NodeKind::IterationStart] = handle_noop;
    h[NodeKind::Llm] = handle_llm;
    h[NodeKind::QuestionClassifier] = handle_classifier;
    h[NodeKind::Code] = handle_code;
    h[NodeKind::DocumentExtractor] = handle_document_extractor;
    h[NodeKind::HttpRequest] = handle_http;
    h[NodeKind::TemplateTransform] = handle_template;
    h[NodeKind::VariableAggregator] = handle_aggregator;
    h[NodeKind::ListOperator] = handle_list_operator;
    h[NodeKind::ParameterExtractor] = handle_extractor;
    h[NodeKind::GoogleSearch] = handle_google_search;
    h[NodeKind::Echarts] = handle_echarts;
    h[NodeKind::TextToSpeech] = handle_tts;
    h[NodeKind::TextToImage] = handle_tti;
    h[NodeKind::MermaidConverter] = handle_mermaid;
    h[NodeKind::MarkdownExporter] = handle_markdown_exporter;
    return registry;
}

namespace {

struct Engine {
    const ValidatedGraph& graph;
    const HandlerRegistry& registry;
    const Catalog& catalog;
    const ExecLimits& limits;
    Trace trace;
    int executions = 0;
    std::map<std::string, TypedValue> end_outputs;

    void bump(const std::string& node_id) {
        if (++executions > limits.max_node_executions)
            throw ExecError(ExecError::Kind::LimitExceeded, node_id,
                            "node execution limit exceeded");
    }

    std::string outputs_summary(const std::map<std::string, TypedValue>& outputs) {
        std::string s;
        for (const auto& [name, value] : outputs) {
            if (name.rfind("__", 0) == 0) continue;
            if (!s.empty()) s += ",";
            std::string r = value.render();
            if (r.size() > 40) r = r.substr(0, 40) + "...";
            for (auto& c : r)
                if (c == '\n') c = ' ';
            s += name + "=" + r;
        }
        return s;
    }

    void run_scope(const std::optional<std::string>& parent, const std::string& entry,
                   VarStore& store) {
        auto order = graph.scope_order(parent);
        std::set<std::string> executed;
        std::map<std::string, int> taken_port;

        auto is_branch = [&](const std::string& id) {
            NodeKind k = graph.node(id).kind;
            return k == NodeKind::IfElse || k == NodeKind::QuestionClassifier;
        };

        for (const auto& id : order) {
            bool active = id == entry;
            if (!active) {
                for (const auto& e : graph.edges()) {
                    if (e.target != id || !executed.count(e.source)) continue;
                    if (is_branch(e.source) && taken_port[e.source] != e.port) continue;
                    active = true;
                    break;
                }
            }
            if (!active) continue;

            const Node& node = graph.node(id);
            bump(id);
            trace.push_back({TraceEvent::Kind::NodeEnter, id});
            std::map<std::string, TypedValue> produced;

            try {
                switch (node.kind) {
                    case NodeKind::Start:
                    case NodeKind::IterationStart:
                        break;  // inputs and the item variable are pre-seeded
                    case NodeKind::End: {
                        ExecContext ctx(graph, node, catalog, store, registry);
                        for (const auto& entry_json : node.params["outputs"]) {
                            std::string name = entry_json["name"].get<std::string>();
                            auto ref = parse_var_ref(entry_json["value"].get<std::string>());
                            TypedValue value = ctx.resolve(*ref);
                            if (!end_outputs.count(name)) end_outputs.emplace(name, value);
                            produced.emplace(name, std::move(value));
                        }
                        break;
                    }
                    case NodeKind::IfElse: {
                        ExecContext ctx(graph, node, catalog, store, registry);
                        json canon = ctx.params();
                        const json& branches = canon["conditions"];
                        int port = static_cast<int>(branches.size());  // ELSE
                        for (std::size_t i = 0; i < branches.size(); ++i) {
                            bool hit;
                            try {
                                hit = evaluate_condition(branches[i], [&](const VarRefToken& r) {
                                    return ctx.resolve(r);
                                });
                            } catch (const ExecError& e) {
                                throw ExecError(e.exec_kind(), id, e.what());
                            }
                            if (hit) {
                                port = static_cast<int>(i);
                                break;
                            }
                        }
                        taken_port[id] = port;
                        trace.push_back({TraceEvent::Kind::BranchTaken, id, port});
                        break;
                    }
                    case NodeKind::QuestionClassifier: {
                        ExecContext ctx(graph, node, catalog, store, registry);
                        auto outputs = handle_classifier(ctx);
                        int port = static_cast<int>(outputs["__port"].data.get<double>());
                        outputs.erase("__port");
                        for (auto& [name, value] : outputs) {
                            store.put(id, name, value);
                            produced.emplace(name, std::move(value));
                        }
                        taken_port[id] = port;
                        trace.push_back({TraceEvent::Kind::BranchTaken, id, port});
                        break;
                    }
                    case NodeKind::Iteration: {
                        ExecContext ctx(graph, node, catalog, store, registry);
                        TypedValue list = ctx.resolve_token_param("input");
                        if (!list.type.is_array)
                            throw ExecError(ExecError::Kind::TypeMismatch, id,
                                            "iteration input is not a list");
                        if (list.array_size() >
                            static_cast<std::size_t>(limits.max_iteration_items))
                            throw ExecError(ExecError::Kind::LimitExceeded, id,
                                            "iteration item limit exceeded");
                        auto out_ref =
                            parse_var_ref(node.params["output"].get<std::string>());

                        std::vector<TypedValue> collected;
                        for (std::size_t i = 0; i < list.array_size(); ++i) {
                            trace.push_back({TraceEvent::Kind::IterationItem, id, -1,
                                             static_cast<int>(i)});
                            VarStore item_store(&store);
                            item_store.put(id, "item", list.element_at(i));
                            item_store.put(id, "index",
                                           TypedValue::number_value(double(i)));
                            run_scope(id, graph.entry_of(id), item_store);
                            const TypedValue* v =
                                item_store.find(out_ref->node_id, out_ref->var_name);
                            if (!v)
                                throw ExecError(ExecError::Kind::UnboundToken, id,
                                                "iteration output " + out_ref->render() +
                                                    " was not produced for item " +
                                                    std::to_string(i));
                            collected.push_back(*v);
                        }

                        TypedValue result;
                        auto collected_type = graph.output_type(id, "output");
                        ScalarType elem =
                            collected_type ? collected_type->elem : ScalarType::String;
                        if (elem == ScalarType::File) {
                            std::vector<FileValue> files;
                            for (const auto& v : collected)
                                if (!v.files.empty()) files.push_back(v.files.front());
                            result = TypedValue::file_array_value(std::move(files));
                        } else {
                            json arr = json::array();
                            for (const auto& v : collected) arr.push_back(v.data);
                            result = TypedValue::array_value(elem, std::move(arr));
                        }
                        store.put(id, "output", result);
                        produced.emplace("output", std::move(result));
                        break;
                    }
                    default: {
                        auto it = registry.handlers.find(node.kind);
                        if (it == registry.handlers.end())
                            throw ExecError(ExecError::Kind::HandlerError, id,
                                            "no handler registered for " + kind_id(node.kind));
                        ExecContext ctx(graph, node, catalog, store, registry);
                        auto outputs = it->second(ctx);
                        validate_handler_outputs(id, outputs);
                        for (auto& [name, value] : outputs) {
                            store.put(id, name, value);
                            produced.emplace(name, std::move(value));
                        }
                        break;
                    }
                }
            } catch (const ExecError& e) {
                trace.push_back({TraceEvent::Kind::Error, id, -1, -1, e.what()});
                throw;
            }

            executed.insert(id);
            trace.push_back(
                {TraceEvent::Kind::NodeExit, id, -1, -1, outputs_summary(produced)});
        }
    }

    void validate_handler_outputs(const std::string& id,
                                  const std::map<std::string, TypedValue>& outputs) {
        const auto& declared = graph.outputs_of(id);
        for (const auto& [name, value] : outputs) {
            auto it = std::find_if(declared.begin(), declared.end(),
                                   [&](const auto& d) { return d.first == name; });
            if (it == declared.end())
                throw ExecError(ExecError::Kind::HandlerError, id,
                                "handler produced undeclared output '" + name + "'");
            if (it->second && value.type != *it->second)
                throw ExecError(ExecError::Kind::HandlerError, id,
                                "handler output '" + name + "' has type " +
                                    value.type.to_string() + ", declared " +
                                    it->second->to_string());
        }
    }
};

}  // namespace

ExecOutput execute(const ValidatedGraph& graph, const std::map<std::string, TypedValue>& inputs,
                   const HandlerRegistry& handlers, const Catalog& catalog,
                   const ExecLimits& limits) {
    // Inputs must match the declared signature by name and type.
    const auto& declared = graph.io_signature().inputs;
    if (inputs.size() != declared.size())
        throw ExecError(ExecError::Kind::InputMismatch, graph.start_id(),
                        "expected " + std::to_string(declared.size()) + " input(s), got " +
                            std::to_string(inputs.size()));
    for (const auto& decl : declared) {
        auto it = inputs.find(decl.name);
        if (it == inputs.end())
            throw ExecError(ExecError::Kind::InputMismatch, graph.start_id(),
                            "missing input '" + decl.name + "'");
        if (it->second.type != decl.type)
            throw ExecError(ExecError::Kind::InputMismatch, graph.start_id(),
                            "input '" + decl.name + "' has type " + it->second.type.to_string() +
                                ", expected " + decl.type.to_string());
    }
    for (const auto& node : graph.nodes())
        if (!handlers.handlers.count(node.kind))
            throw ExecError(ExecError::Kind::HandlerError, node.id,
                            "no handler registered for " + kind_id(node.kind));

    Engine engine{graph, handlers, catalog, limits};
    VarStore root;
    for (const auto& [name, value] : inputs) root.put(graph.start_id(), name, value);
    engine.run_scope(std::nullopt, graph.start_id(), root);

    ExecOutput out;
    out.trace = std::move(engine.trace);
    for (auto& [name, value] : engine.end_outputs) {
        if (value.type.is_file_kind())
            out.file_outputs.emplace(name, std::move(value));
        else
            out.text_outputs.emplace(name, std::move(value));
    }
    return out;
}

}  // namespace flowkit
