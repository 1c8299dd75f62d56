#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace capsolve {

/// Operand glyph family: simplified Chinese, traditional Chinese, Arabic digit.
enum class Script { S, T, D };

/// Operator rendering: symbolic, single character, double character.
enum class OperatorForm { O, N, NN };

enum class Op { Add, Sub, Mul, Div };

/// One of the eight valid (script, form) layouts. (S, N) does not occur.
struct NotationType {
    Script script = Script::D;
    OperatorForm form = OperatorForm::O;

    bool operator==(const NotationType&) const = default;
};

/// A concrete arithmetic challenge: <first operand, operator, second operand>
/// plus its rendering family.
struct NotationSpec {
    int first = 0;  // 0..9
    Op op = Op::Add;
    int second = 0;  // 0..9
    Script script = Script::D;
    OperatorForm form = OperatorForm::O;

    NotationType type() const { return {script, form}; }

    bool operator==(const NotationSpec&) const = default;
};

/// All valid types in fixed order: S rows, T rows, D rows, minus (S, N).
std::vector<NotationType> enumerate_types();

/// Operand alternatives: 10 values for each of the 3 scripts.
int operand_choice_count();

/// Operator alternatives: 4 operations in each of the 3 forms.
int operator_candidate_count();

/// Raw product operands x operands x operators, computed from the enumerated
/// choice sets (30 * 30 * 12).
long combination_count();

bool spec_valid(const NotationSpec& spec);

/// Uniformly samples a valid spec over the allowed types. Division operands
/// are redrawn until the quotient is an exact integer.
NotationSpec sample_spec(std::uint64_t seed, std::span<const NotationType> allowed);

/// Exact integer arithmetic; subtraction may go negative. Throws on a spec
/// violating the division invariant.
int compute_answer(const NotationSpec& spec);

std::string to_string(Script s);
std::string to_string(OperatorForm f);
std::string to_string(Op op);
std::string to_string(NotationType t);  // e.g. "D-O", "S-NN"

Script parse_script(const std::string& s);
OperatorForm parse_form(const std::string& s);
Op parse_op(const std::string& s);
NotationType parse_type(const std::string& s);

}  // namespace capsolve
