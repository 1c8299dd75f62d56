#include "capsolve/notation.hpp"

#include <stdexcept>

#include "capsolve/rng.hpp"

namespace capsolve {

std::vector<NotationType> enumerate_types() {
    std::vector<NotationType> out;
    for (Script s : {Script::S, Script::T, Script::D})
        for (OperatorForm f : {OperatorForm::O, OperatorForm::N, OperatorForm::NN}) {
            if (s == Script::S && f == OperatorForm::N) continue;  // the missing type
            out.push_back({s, f});
        }
    return out;
}

int operand_choice_count() {
    int n = 0;
    for (Script s : {Script::S, Script::T, Script::D}) {
        (void)s;
        for (int d = 0; d <= 9; ++d) ++n;
    }
    return n;
}

int operator_candidate_count() {
    int n = 0;
    for (OperatorForm f : {OperatorForm::O, OperatorForm::N, OperatorForm::NN}) {
        (void)f;
        for (Op op : {Op::Add, Op::Sub, Op::Mul, Op::Div}) {
            (void)op;
            ++n;
        }
    }
    return n;
}

long combination_count() {
    const long operands = operand_choice_count();
    const long operators = operator_candidate_count();
    return operands * operands * operators;
}

bool spec_valid(const NotationSpec& spec) {
    if (spec.first < 0 || spec.first > 9 || spec.second < 0 || spec.second > 9) return false;
    if (spec.script == Script::S && spec.form == OperatorForm::N) return false;
    if (spec.op == Op::Div && (spec.second == 0 || spec.first % spec.second != 0)) return false;
    return true;
}

NotationSpec sample_spec(std::uint64_t seed, std::span<const NotationType> allowed) {
    if (allowed.empty()) throw std::invalid_argument("allowed type set is empty");
    Rng rng(seed);
    const NotationType type = allowed[rng.index(allowed.size())];
    NotationSpec spec;
    spec.script = type.script;
    spec.form = type.form;
    spec.first = rng.uniform_int(0, 9);
    spec.op = static_cast<Op>(rng.uniform_int(0, 3));
    spec.second = rng.uniform_int(0, 9);
    if (spec.op == Op::Div) {
        while (spec.second == 0 || spec.first % spec.second != 0) {
            spec.first = rng.uniform_int(0, 9);
            spec.second = rng.uniform_int(0, 9);
        }
    }
    return spec;
}

int compute_answer(const NotationSpec& spec) {
    switch (spec.op) {
        case Op::Add: return spec.first + spec.second;
        case Op::Sub: return spec.first - spec.second;
        case Op::Mul: return spec.first * spec.second;
        case Op::Div:
            if (spec.second == 0 || spec.first % spec.second != 0)
                throw std::invalid_argument("invalid division spec");
            return spec.first / spec.second;
    }
    throw std::logic_error("unreachable operator");
}

std::string to_string(Script s) {
    switch (s) {
        case Script::S: return "S";
        case Script::T: return "T";
        case Script::D: return "D";
    }
    return "?";
}

std::string to_string(OperatorForm f) {
    switch (f) {
        case OperatorForm::O: return "O";
        case OperatorForm::N: return "N";
        case OperatorForm::NN: return "NN";
    }
    return "?";
}

std::string to_string(Op op) {
    switch (op) {
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
    }
    return "?";
}

std::string to_string(NotationType t) { return to_string(t.script) + "-" + to_string(t.form); }

Script parse_script(const std::string& s) {
    if (s == "S") return Script::S;
    if (s == "T") return Script::T;
    if (s == "D") return Script::D;
    throw std::invalid_argument("unknown script '" + s + "'");
}

OperatorForm parse_form(const std::string& s) {
    if (s == "O") return OperatorForm::O;
    if (s == "N") return OperatorForm::N;
    if (s == "NN") return OperatorForm::NN;
    throw std::invalid_argument("unknown operator form '" + s + "'");
}

Op parse_op(const std::string& s) {
    if (s == "add") return Op::Add;
    if (s == "sub") return Op::Sub;
    if (s == "mul") return Op::Mul;
    if (s == "div") return Op::Div;
    throw std::invalid_argument("unknown operator '" + s + "'");
}

NotationType parse_type(const std::string& s) {
    const auto dash = s.find('-');
    if (dash == std::string::npos) throw std::invalid_argument("bad type '" + s + "', expected SCRIPT-FORM");
    NotationType t{parse_script(s.substr(0, dash)), parse_form(s.substr(dash + 1))};
    if (t.script == Script::S && t.form == OperatorForm::N)
        throw std::invalid_argument("type S-N does not exist");
    return t;
}

}  // namespace capsolve
