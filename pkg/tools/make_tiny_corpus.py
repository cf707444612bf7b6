#!/usr/bin/env python3
"""Build the bundled demo corpus: 64 small, structurally distinct C
functions compiled to LLVM IR with clang -O0.

Needs clang on PATH. The output JSONL is committed with the repository so
tests and demos never require a compiler. The script refuses to emit a
corpus in which two snippets optimize to the same flow graph or share a
query, since such pairs are unrankable.

Usage: python tools/make_tiny_corpus.py [out.jsonl]
"""

import json
import pathlib
import subprocess
import sys
import tempfile

# fmt: off
FUNCTIONS = [
    ("sum_array_fwd", "compute the sum of all values in an array", """
int sum_array_fwd(int *values, int count) {
    int total = 0;
    int i;
    for (i = 0; i < count; i++) {
        total += values[i];
    }
    return total;
}
"""),
    ("sum_until_zero", "add together the numbers before a zero terminator", """
int sum_until_zero(int *values) {
    int total = 0;
    int i = 0;
    while (values[i] != 0) {
        total += values[i];
        i = i + 1;
    }
    return total;
}
"""),
    ("sum_array_down", "accumulate the array elements walking from the back", """
int sum_array_down(int *values, int count) {
    int total = 0;
    int i;
    for (i = count - 1; i >= 0; i--) {
        total += values[i];
    }
    return total;
}
"""),
    ("sum_array_rec", "recursively total the integers referenced by a pointer", """
int sum_array_rec(int *values, int count) {
    if (count == 0) {
        return 0;
    }
    return values[0] + sum_array_rec(values + 1, count - 1);
}
"""),
    ("find_max", "find the largest element stored in a buffer", """
int find_max(int *items, int n) {
    int best = items[0];
    int i;
    for (i = 1; i < n; i++) {
        if (items[i] > best) {
            best = items[i];
        }
    }
    return best;
}
"""),
    ("find_min", "locate the smallest value the list contains", """
int find_min(int *items, int n) {
    int low = 2147483647;
    int i = 0;
    while (i < n) {
        if (items[i] < low) {
            low = items[i];
        }
        i++;
    }
    return low;
}
"""),
    ("find_max_index", "return the position of the maximum entry", """
int find_max_index(int *items, int n) {
    int at = 0;
    int i;
    for (i = 1; i < n; i++) {
        if (items[i] > items[at]) {
            at = i;
        }
    }
    return at;
}
"""),
    ("max_of_pair_sums", "find the biggest sum of adjacent element pairs", """
int max_of_pair_sums(int *items, int n) {
    int best = items[0] + items[1];
    int i;
    for (i = 1; i + 1 < n; i++) {
        int s = items[i] + items[i + 1];
        if (s > best) {
            best = s;
        }
    }
    return best;
}
"""),
    ("count_even", "count how many numbers are even in the list", """
int count_even(int *nums, int n) {
    int hits = 0;
    int i;
    for (i = 0; i < n; i++) {
        if (nums[i] % 2 == 0) {
            hits++;
        }
    }
    return hits;
}
"""),
    ("count_multiples_of_three", "tally the entries divisible by three", """
int count_multiples_of_three(int *nums, int n) {
    int hits = 0;
    int i = 0;
    while (i < n) {
        if (nums[i] % 3 == 0) {
            hits = hits + 1;
        }
        i++;
    }
    return hits;
}
"""),
    ("count_negative", "report the amount of negative numbers present", """
int count_negative(int *nums, int n) {
    int seen = 0;
    int i;
    for (i = 0; i < n; i++) {
        if (nums[i] < 0) {
            seen += 1;
        }
    }
    return seen;
}
"""),
    ("count_matches", "count positions where two arrays hold equal values", """
int count_matches(int *a, int *b, int n) {
    int same = 0;
    int i;
    for (i = 0; i < n; i++) {
        if (a[i] == b[i]) {
            same++;
        }
    }
    return same;
}
"""),
    ("scale_values", "multiply every entry of the vector by a factor", """
void scale_values(int *data, int n, int factor) {
    int i;
    for (i = 0; i < n; i++) {
        data[i] = data[i] * factor;
    }
}
"""),
    ("halve_values", "divide each element of the array by two", """
void halve_values(int *data, int n) {
    int i = 0;
    while (i < n) {
        data[i] = data[i] / 2;
        i++;
    }
}
"""),
    ("shift_values", "add a constant offset onto every array slot", """
void shift_values(int *data, int n, int offset) {
    int i;
    for (i = 0; i < n; i++) {
        data[i] = data[i] + offset;
    }
}
"""),
    ("negate_values", "flip the sign of each number in place", """
void negate_values(int *data, int n) {
    int i;
    for (i = n - 1; i >= 0; i--) {
        data[i] = -data[i];
    }
}
"""),
    ("dot_product", "calculate the dot product of two vectors", """
int dot_product(int *a, int *b, int n) {
    int acc = 0;
    int i;
    for (i = 0; i < n; i++) {
        acc += a[i] * b[i];
    }
    return acc;
}
"""),
    ("sum_of_squares", "sum the square of every element in the array", """
int sum_of_squares(int *a, int n) {
    int acc = 0;
    int i = 0;
    while (i < n) {
        acc += a[i] * a[i];
        i++;
    }
    return acc;
}
"""),
    ("weighted_sum", "combine values with weights into a single total", """
int weighted_sum(int *values, int *weights, int n) {
    int out = 0;
    int i;
    for (i = 0; i < n; i++) {
        out = out + values[i] * weights[i] + 1;
    }
    return out;
}
"""),
    ("l1_distance", "measure the manhattan distance between two vectors", """
int l1_distance(int *a, int *b, int n) {
    int dist = 0;
    int i;
    for (i = 0; i < n; i++) {
        int d = a[i] - b[i];
        if (d < 0) {
            d = -d;
        }
        dist += d;
    }
    return dist;
}
"""),
    ("clamp_range", "clamp a value into the inclusive range between two bounds", """
int clamp_range(int value, int lo, int hi) {
    int out = value;
    if (out < lo) {
        out = lo;
    }
    if (out > hi) {
        out = hi;
    }
    return out;
}
"""),
    ("clamp_byte", "saturate an integer into the byte range from zero to 255", """
int clamp_byte(int value) {
    int out = value;
    if (out < 0) {
        out = 0;
    } else if (out > 255) {
        out = 255;
    }
    return out;
}
"""),
    ("wrap_index", "wrap an index around a ring buffer size with modulo", """
int wrap_index(int index, int size) {
    int r = index % size;
    if (r < 0) {
        r = r + size;
    }
    return r;
}
"""),
    ("sign_of", "classify a number as negative zero or positive", """
int sign_of(int value) {
    if (value < 0) {
        return -1;
    }
    if (value > 0) {
        return 1;
    }
    return 0;
}
"""),
    ("factorial_rec", "recursively compute the factorial of a number", """
int factorial_rec(int n) {
    if (n <= 1) {
        return 1;
    }
    return n * factorial_rec(n - 1);
}
"""),
    ("factorial_iter", "compute a factorial with an iterative loop", """
int factorial_iter(int n) {
    int acc = 1;
    int i;
    for (i = 2; i <= n; i++) {
        acc *= i;
    }
    return acc;
}
"""),
    ("fibonacci_rec", "produce a fibonacci number by double recursion", """
int fibonacci_rec(int n) {
    if (n < 2) {
        return n;
    }
    return fibonacci_rec(n - 1) + fibonacci_rec(n - 2);
}
"""),
    ("gcd_rec", "find the greatest common divisor with euclid recursion", """
int gcd_rec(int a, int b) {
    if (b == 0) {
        return a;
    }
    return gcd_rec(b, a % b);
}
"""),
    ("linear_search", "search the array for a key and return its index", """
int linear_search(int *arr, int n, int key) {
    int i;
    for (i = 0; i < n; i++) {
        if (arr[i] == key) {
            return i;
        }
    }
    return -1;
}
"""),
    ("contains_value", "check whether the list contains a given number", """
int contains_value(int *arr, int n, int key) {
    int found = 0;
    int i = 0;
    while (i < n) {
        if (arr[i] == key) {
            found = 1;
        }
        i++;
    }
    return found;
}
"""),
    ("last_index_of", "return the final position where the key appears", """
int last_index_of(int *arr, int n, int key) {
    int at = -1;
    int i;
    for (i = 0; i < n; i++) {
        if (arr[i] == key) {
            at = i;
        }
    }
    return at;
}
"""),
    ("count_adjacent_equal", "count adjacent positions holding equal values", """
int count_adjacent_equal(int *arr, int n) {
    int times = 0;
    int i;
    for (i = 0; i + 1 < n; i++) {
        if (arr[i] == arr[i + 1]) {
            times++;
        }
    }
    return times;
}
"""),
    ("reverse_copy", "copy the source array into the destination in reverse order", """
void reverse_copy(int *dst, int *src, int n) {
    int i;
    for (i = 0; i < n; i++) {
        dst[i] = src[n - 1 - i];
    }
}
"""),
    ("copy_until_zero", "copy source values across until a zero appears", """
void copy_until_zero(int *dst, int *src) {
    int i = 0;
    while (src[i] != 0) {
        dst[i] = src[i];
        i = i + 1;
    }
    dst[i] = 0;
}
"""),
    ("reverse_in_place", "reverse the array in place by swapping ends", """
void reverse_in_place(int *arr, int n) {
    int i;
    for (i = 0; i < n / 2; i++) {
        int tmp = arr[i];
        arr[i] = arr[n - 1 - i];
        arr[n - 1 - i] = tmp;
    }
}
"""),
    ("rotate_left_once", "rotate the array left by a single position", """
void rotate_left_once(int *arr, int n) {
    int first = arr[0];
    int i;
    for (i = 0; i + 1 < n; i++) {
        arr[i] = arr[i + 1];
    }
    arr[n - 1] = first;
}
"""),
    ("count_below", "count the elements smaller than a threshold value", """
int count_below(int *xs, int n, int limit) {
    int seen = 0;
    int i;
    for (i = n - 1; i >= 0; i--) {
        if (xs[i] < limit) {
            seen++;
        }
    }
    return seen;
}
"""),
    ("count_in_range", "count the values falling inside a closed interval", """
int count_in_range(int *xs, int n, int lo, int hi) {
    int seen = 0;
    int i;
    for (i = 0; i < n; i++) {
        if (xs[i] >= lo && xs[i] <= hi) {
            seen++;
        }
    }
    return seen;
}
"""),
    ("all_positive", "decide whether every element is strictly positive", """
int all_positive(int *xs, int n) {
    int ok = 1;
    int i = 0;
    while (i < n) {
        if (xs[i] <= 0) {
            ok = 0;
        }
        i++;
    }
    return ok;
}
"""),
    ("first_above", "return the first value exceeding the threshold", """
int first_above(int *xs, int n, int limit) {
    int i;
    for (i = 0; i < n; i++) {
        if (xs[i] > limit) {
            return xs[i];
        }
    }
    return limit;
}
"""),
    ("abs_diff", "return the absolute difference of two integers", """
int abs_diff(int a, int b) {
    int d = a - b;
    if (d < 0) {
        d = -d;
    }
    return d;
}
"""),
    ("squared_diff", "square the gap between two numbers", """
int squared_diff(int a, int b) {
    int d = a - b;
    int sq = d * d;
    if (sq < 0) {
        sq = 0;
    }
    return sq;
}
"""),
    ("midpoint", "compute the midpoint of two integers without overflow", """
int midpoint(int a, int b) {
    int half = (b - a) / 2;
    int mid = a + half;
    if (half < 0) {
        mid = b - half;
    }
    return mid;
}
"""),
    ("same_sign", "test whether two numbers share the same sign", """
int same_sign(int a, int b) {
    int p = a * b;
    if (p > 0) {
        return 1;
    }
    return 0;
}
"""),
    ("sum_to_n_while", "add up every integer from one to the given limit", """
int sum_to_n_while(int n) {
    int total = 0;
    int i = 1;
    while (i <= n) {
        total += i;
        i++;
    }
    return total;
}
"""),
    ("sum_to_n_formula", "use the closed formula for the triangular number", """
int sum_to_n_formula(int n) {
    int a = n * (n + 1);
    int t = a / 2;
    if (n < 0) {
        t = 0;
    }
    return t;
}
"""),
    ("sum_odds_to_n", "total only the odd integers up to the bound", """
int sum_odds_to_n(int n) {
    int total = 0;
    int i;
    for (i = 1; i <= n; i += 2) {
        total += i;
    }
    return total;
}
"""),
    ("sum_to_n_rec", "recursively add the first n natural numbers", """
int sum_to_n_rec(int n) {
    if (n <= 0) {
        return 0;
    }
    return n + sum_to_n_rec(n - 1);
}
"""),
    ("min_of_three", "pick the smallest of three numbers", """
int min_of_three(int a, int b, int c) {
    int m;
    if (a < b) {
        m = a;
    } else {
        m = b;
    }
    if (c < m) {
        m = c;
    }
    return m;
}
"""),
    ("median_of_three", "select the middle value among three inputs", """
int median_of_three(int a, int b, int c) {
    int lo = a;
    int hi = b;
    if (lo > hi) {
        lo = b;
        hi = a;
    }
    if (c < lo) {
        return lo;
    }
    if (c > hi) {
        return hi;
    }
    return c;
}
"""),
    ("sort_two", "order a pair of values through pointers", """
void sort_two(int *x, int *y) {
    int a = *x;
    int b = *y;
    if (a > b) {
        *x = b;
        *y = a;
    }
}
"""),
    ("range_width", "measure the spread between array extremes", """
int range_width(int *xs, int n) {
    int lo = xs[0];
    int hi = xs[0];
    int i;
    for (i = 1; i < n; i++) {
        if (xs[i] < lo) {
            lo = xs[i];
        }
        if (xs[i] > hi) {
            hi = xs[i];
        }
    }
    return hi - lo;
}
"""),
    ("range_product", "multiply together the integers in a half open range", """
int range_product(int lo, int hi) {
    int acc = 1;
    int i;
    for (i = lo; i < hi; i++) {
        acc *= i;
    }
    return acc;
}
"""),
    ("array_product", "multiply every element of the array together", """
int array_product(int *xs, int n) {
    int acc = 1;
    int i = 0;
    while (i < n) {
        acc = acc * xs[i];
        i++;
    }
    return acc;
}
"""),
    ("double_until", "keep doubling a value until it reaches the limit", """
int double_until(int start, int limit) {
    int v = start;
    while (v < limit) {
        v = v * 2;
    }
    return v;
}
"""),
    ("count_divisors", "count the divisors of a positive integer", """
int count_divisors(int n) {
    int hits = 0;
    int i;
    for (i = 1; i <= n; i++) {
        if (n % i == 0) {
            hits++;
        }
    }
    return hits;
}
"""),
    ("fill_constant", "fill the whole buffer with one constant value", """
void fill_constant(int *buf, int n, int value) {
    int i;
    for (i = 0; i < n; i++) {
        buf[i] = value;
    }
}
"""),
    ("fill_iota", "write increasing indices into each array cell", """
void fill_iota(int *buf, int n) {
    int i = 0;
    while (i < n) {
        buf[i] = i;
        i++;
    }
}
"""),
    ("zero_tail", "clear the buffer contents after a given position", """
void zero_tail(int *buf, int n, int from) {
    int i;
    for (i = from; i < n; i++) {
        buf[i] = 0;
    }
}
"""),
    ("fill_alternating", "alternate two fill values across the buffer", """
void fill_alternating(int *buf, int n, int a, int b) {
    int i;
    for (i = 0; i < n; i++) {
        if (i % 2 == 0) {
            buf[i] = a;
        } else {
            buf[i] = b;
        }
    }
}
"""),
    ("power_rec", "raise a base to an exponent using recursion", """
int power_rec(int base, int exp) {
    if (exp == 0) {
        return 1;
    }
    return base * power_rec(base, exp - 1);
}
"""),
    ("power_iter", "compute an integer power with repeated multiplication", """
int power_iter(int base, int exp) {
    int acc = 1;
    int i;
    for (i = 0; i < exp; i++) {
        acc = acc * base;
    }
    return acc;
}
"""),
    ("is_power_of_two", "test whether a number is an exact power of two", """
int is_power_of_two(int v) {
    if (v <= 0) {
        return 0;
    }
    while (v % 2 == 0) {
        v = v / 2;
    }
    return v == 1;
}
"""),
    ("trailing_zero_bits", "count the trailing zero bits of an integer", """
int trailing_zero_bits(int v) {
    int bits = 0;
    if (v == 0) {
        return 32;
    }
    while ((v & 1) == 0) {
        bits++;
        v = v >> 1;
    }
    return bits;
}
"""),
]
# fmt: on

COMMENT_STYLES = ["/* {c}. */", "// {c}.", "/** {c}. */", "/*\n * {c}.\n */"]


def slim_ir(text: str) -> str:
    """Keep only the function definitions; drop module boilerplate."""
    out = []
    keep = False
    for line in text.splitlines():
        if line.startswith("define"):
            keep = True
        if keep:
            out.append(line)
        if keep and line.startswith("}"):
            keep = False
    return "\n".join(out) + "\n"


def graph_fingerprint(ir: str):
    from vfgsearch.ir import parse_module
    from vfgsearch.optimize import optimize
    from vfgsearch.vfg import build_vfg

    module = parse_module(ir)
    f = module.functions[0]
    g, _ = optimize(build_vfg(f, module.function_names()), f)
    nodes = tuple(sorted(n.label for n in g.nodes))
    edges = tuple(
        sorted((g.nodes[e.src].label, g.nodes[e.dst].label, e.kind.value) for e in g.edges)
    )
    return nodes, edges


def main(out_path: str) -> None:
    records = []
    fingerprints = {}
    queries = set()
    with tempfile.TemporaryDirectory() as tmp:
        tmpdir = pathlib.Path(tmp)
        for idx, (name, comment, code) in enumerate(FUNCTIONS):
            code = code.strip() + "\n"
            c_path = tmpdir / f"{name}.c"
            ll_path = tmpdir / f"{name}.ll"
            c_path.write_text(code)
            subprocess.run(
                ["clang", "-S", "-emit-llvm", "-O0", "-o", str(ll_path), str(c_path)],
                check=True,
                capture_output=True,
            )
            ir = slim_ir(ll_path.read_text())
            fp = graph_fingerprint(ir)
            if fp in fingerprints:
                raise SystemExit(
                    f"{name} optimizes to the same graph as {fingerprints[fp]}"
                )
            fingerprints[fp] = name
            if comment in queries:
                raise SystemExit(f"duplicate query: {comment}")
            queries.add(comment)
            style = COMMENT_STYLES[idx % len(COMMENT_STYLES)]
            records.append(
                {
                    "id": f"tiny-{idx:03d}-{name}",
                    "query": style.format(c=comment),
                    "ir": ir,
                    "code": code,
                    "name": name,
                }
            )
    with open(out_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(records)} records to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/tiny_corpus.jsonl")
