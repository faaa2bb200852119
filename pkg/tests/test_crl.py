"""Unit tests for the crl module."""

# pylint: disable=missing-class-docstring,missing-function-docstring,invalid-name
# flake8: noqa

from datetime import timedelta
from pathlib import Path
from shutil import rmtree
from tempfile import mkdtemp
from unittest import main, TestCase

from layeraudit.crl import Absence, ComplianceRule, Content, ContentOperator, ContentScope, Existence, Precedence, Response, RuleRegistry, \
    RuleRegistryError, RuleSyntaxError, format_rule, load_registry, parse_registry, pretty_print, validate_registry
from layeraudit.event_model import Layer, merge_logs, read_events

DATA_DIR = Path(__file__).parent / 'data'


def no_lists(_unused_path):
    return []


def sanctioned(_unused_path):
    return ['IR', ' KP ']


class TestProductions(TestCase):
    def _pattern(self, body):
        return parse_registry(f'rule X: {body}\n', list_loader=sanctioned).rules[0].pattern

    def test_parse_1_precedence(self):
        self.assertEqual(self._pattern('"Shipment started" only after "Delivery created"'), Precedence('Shipment started', 'Delivery created'))

    def test_parse_2_precedence_not_before(self):
        self.assertEqual(self._pattern('"Ship" not before "Pack"'), Precedence('Ship', 'Pack'))

    def test_parse_3_precedence_before(self):
        self.assertEqual(self._pattern('"Pack" before "Ship"'), Precedence('Ship', 'Pack'))

    def test_parse_4_absence(self):
        self.assertEqual(self._pattern('never "Hard block removed manually"'), Absence('Hard block removed manually'))

    def test_parse_5_existence(self):
        self.assertEqual(self._pattern('require "Trade compliance screening"'), Existence('Trade compliance screening'))

    def test_parse_6_response(self):
        self.assertEqual(self._pattern('"Order" followed by "Delivery"'), Response('Order', 'Delivery'))

    def test_parse_7_response_deadline(self):
        self.assertEqual(self._pattern('"Order" followed by "Delivery" within 3d'), Response('Order', 'Delivery', timedelta(days=3)))
        self.assertEqual(self._pattern('"Order" followed by "Delivery" within 12h').deadline, timedelta(hours=12))
        self.assertEqual(self._pattern('"Order" followed by "Delivery" within 45m').deadline, timedelta(minutes=45))

    def test_parse_8_content_set(self):
        self.assertEqual(self._pattern('event attribute amount in { "1", "2" }'),
                         Content(ContentScope.event, 'amount', ContentOperator.member, ('1', '2')))

    def test_parse_9_content_equality(self):
        self.assertEqual(self._pattern('case attribute country == "SE"'), Content(ContentScope.case, 'country', ContentOperator.eq, ('SE',)))
        self.assertEqual(self._pattern('case attribute country != "SE"').operator, ContentOperator.neq)

    def test_parse_10_content_list(self):
        registry = parse_registry('list sanctioned from "countries.txt"\nrule X: case attribute country not_in sanctioned\n', list_loader=sanctioned)
        self.assertEqual(registry.rules[0].pattern, Content(ContentScope.case, 'country', ContentOperator.not_member, list_name='sanctioned'))
        self.assertEqual(registry.values_for(registry.rules[0].pattern), frozenset({'ir', 'kp'}))

    def test_parse_11_escapes(self):
        self.assertEqual(self._pattern(r'never "say \"hi\" \\ now"'), Absence('say "hi" \\ now'))

    def test_parse_12_trimmed_activity(self):
        self.assertEqual(self._pattern('never "  Padded  "'), Absence('Padded'))

    def test_parse_13_comments_and_layout(self):
        registry = parse_registry('# header\n\nrule A:\n   never "x"   # trailing\nrule B: require\n "y"\n')
        self.assertEqual(registry.rule_ids, ['A', 'B'])
        self.assertEqual(registry.rule('B').pattern, Existence('y'))

    def test_parse_14_empty(self):
        self.assertEqual(len(parse_registry('')), 0)
        self.assertEqual(len(parse_registry('# only a comment\n')), 0)

    def test_parse_15_description(self):
        registry = parse_registry('rule R01:  "Shipment started"   only after "Delivery created"  # note\n')
        self.assertEqual(registry.rule('R01').description, 'rule R01:  "Shipment started"   only after "Delivery created"')

    def test_values_for_1_literals(self):
        registry = parse_registry('rule X: event attribute country in { " SE ", "no" }\n')
        self.assertEqual(registry.values_for(registry.rules[0].pattern), frozenset({'se', 'no'}))


class TestSyntaxErrors(TestCase):
    CASES = (
        ('rule R1 "A" only after "B"', RuleSyntaxError.SYNTAX, 1, 9),
        ('rule R1: "A" only "B"', RuleSyntaxError.SYNTAX, 1, 19),
        ('rule R1: "A" followed "B"', RuleSyntaxError.SYNTAX, 1, 23),
        ('rule R1: "A" followed by "B" within 3w', RuleSyntaxError.BAD_DURATION, 1, 37),
        ('rule R1: "A" followed by "B" within 0d', RuleSyntaxError.BAD_DURATION, 1, 37),
        ('rule R1: "A" followed by "B" within 30s', RuleSyntaxError.BAD_DURATION, 1, 37),
        ('rule R1: "A" followed by "B" within 3', RuleSyntaxError.BAD_DURATION, 1, 37),
        ('rule R1: "A" followed by "B" within', RuleSyntaxError.SYNTAX, 1, 36),
        ('rule R1: never "A', RuleSyntaxError.BAD_STRING, 1, 16),
        ('rule R1: "A" maybe "B"', RuleSyntaxError.SYNTAX, 1, 14),
        ('rule R1: never', RuleSyntaxError.SYNTAX, 1, 15),
        ('rule: never "A"', RuleSyntaxError.SYNTAX, 1, 5),
        ('rules R1: never "A"', RuleSyntaxError.SYNTAX, 1, 1),
        ('rule R1: case attribute country > "IR"', RuleSyntaxError.SYNTAX, 1, 33),
        ('rule R1: event attribute amount in { "1", }', RuleSyntaxError.SYNTAX, 1, 43),
        ('rule R1: case attribute country in {}', RuleSyntaxError.SYNTAX, 1, 37),
        ('rule R1: never "A"\nrule R2 never "B"', RuleSyntaxError.SYNTAX, 2, 9),
        ('list sanctioned "x.txt"', RuleSyntaxError.SYNTAX, 1, 17),
        ('rule R1: never "A" @', RuleSyntaxError.SYNTAX, 1, 20),
        ('rule 01: never "A"', RuleSyntaxError.SYNTAX, 1, 6),
        ('rule R1: "A" only after\n"B\n', RuleSyntaxError.BAD_STRING, 2, 1),
    )

    def test_syntax_errors_1_positions(self):
        for (source, error, line, column) in self.CASES:
            with self.subTest(source=source):
                try:
                    parse_registry(source, list_loader=no_lists)
                    self.fail('invalid registry accepted')
                except RuleSyntaxError as err:
                    self.assertEqual(err.code, error.code)
                    self.assertEqual((err.vars['line'], err.vars['column']), (line, column))

    def test_syntax_errors_2_message(self):
        try:
            parse_registry('rules R1: never "A"')
            self.fail('invalid registry accepted')
        except RuleSyntaxError as err:
            self.assertEqual(str(err), 'Line 1, column 1: expected "rule" or "list", found "rules"')

    def test_syntax_errors_3_end_of_input(self):
        try:
            parse_registry('rule R1: never')
            self.fail('invalid registry accepted')
        except RuleSyntaxError as err:
            self.assertTrue(str(err).endswith('found end of input'))


class TestRegistryErrors(TestCase):
    def _assert_error(self, error, source, list_loader=no_lists):
        try:
            parse_registry(source, list_loader=list_loader)
            self.fail('invalid registry accepted')
        except RuleRegistryError as err:
            self.assertEqual(err.code, error.code)
            return err

    def test_registry_errors_1_set_operator_needs_set(self):
        err = self._assert_error(RuleRegistryError.BAD_OPERATOR_VALUE, 'rule R1: case attribute country in "IR"')
        self.assertEqual((err.vars['line'], err.vars['column']), (1, 36))

    def test_registry_errors_2_equality_needs_string(self):
        self._assert_error(RuleRegistryError.BAD_OPERATOR_VALUE, 'rule R1: case attribute country == sanctioned')
        self._assert_error(RuleRegistryError.BAD_OPERATOR_VALUE, 'rule R1: case attribute country != { "IR" }')

    def test_registry_errors_3_empty_activity(self):
        err = self._assert_error(RuleRegistryError.EMPTY_ACTIVITY, 'rule R1: never "A"\nrule R2: "  " only after "B"')
        self.assertEqual(err.vars['line'], 2)

    def test_registry_errors_4_duplicate_rule(self):
        err = self._assert_error(RuleRegistryError.DUPLICATE_RULE, 'rule R1: never "A"\nrule R1: never "B"\n')
        self.assertEqual(str(err), 'Line 2: rule R1 is already defined')

    def test_registry_errors_5_duplicate_list(self):
        self._assert_error(RuleRegistryError.DUPLICATE_LIST, 'list a from "x"\nlist a from "y"\n')

    def test_registry_errors_6_unknown_list(self):
        self._assert_error(RuleRegistryError.UNKNOWN_LIST, 'rule R1: case attribute country not_in sanctioned')

    def test_registry_errors_7_list_file(self):
        def missing(path):
            raise FileNotFoundError(path)
        self._assert_error(RuleRegistryError.LIST_FILE, 'list a from "missing.txt"\n', missing)

    def test_registry_errors_8_list_file_on_disk(self):
        try:
            parse_registry('list a from "no_such_list.txt"\n', base_dir=DATA_DIR)
            self.fail('missing list file accepted')
        except RuleRegistryError as err:
            self.assertEqual(err.code, RuleRegistryError.LIST_FILE.code)

    def test_registry_errors_9_not_utf8(self):
        tempdir = Path(mkdtemp()).resolve()
        try:
            (tempdir / 'rules.crl').write_bytes(b'rule R1: never "Caf\xe9"\n')
            (tempdir / 'lists.crl').write_text('list a from "a.txt"\n', encoding='utf-8')
            (tempdir / 'a.txt').write_bytes(b'\xff\xfe\n')
            for (name, error) in (('rules.crl', RuleRegistryError.BAD_ENCODING), ('lists.crl', RuleRegistryError.LIST_FILE)):
                with self.subTest(name=name):
                    try:
                        load_registry(tempdir / name)
                        self.fail('undecodable file accepted')
                    except RuleRegistryError as err:
                        self.assertEqual(err.code, error.code)
        finally:
            rmtree(tempdir)


class TestRegistryFile(TestCase):
    def setUp(self):
        self.registry = load_registry(DATA_DIR / 'trade_rules.crl')

    def test_load_1_rules(self):
        self.assertEqual(self.registry.rule_ids, ['R01', 'R02', 'R03', 'R04', 'R05'])
        self.assertEqual(self.registry.value_lists['sanctioned'].values, frozenset({'ir', 'kp', 'sy'}))
        self.assertEqual(self.registry.rule('R02').pattern, Response('Sales order received', 'Delivery created', timedelta(days=3)))

    def test_load_2_rule_lookup(self):
        with self.assertRaises(KeyError):
            self.registry.rule('R99')

    def test_load_3_activities(self):
        self.assertEqual(self.registry.activities, {'Shipment started', 'Delivery created', 'Sales order received', 'Hard block removed manually',
                                                    'Trade compliance screening'})

    def test_format_rule_1(self):
        self.assertEqual(format_rule(self.registry.rule('R02')), 'rule R02: "Sales order received" followed by "Delivery created" within 3d')
        self.assertEqual(str(self.registry.rule('R05')), 'rule R05: case attribute country not_in sanctioned')

    def test_pretty_print_1_text(self):
        self.assertEqual(pretty_print(self.registry).splitlines()[:2],
                         ['list sanctioned from "sanctioned_countries.txt"', 'rule R01: "Shipment started" only after "Delivery created"'])

    def test_pretty_print_2_reparse(self):
        reparsed = parse_registry(pretty_print(self.registry), base_dir=DATA_DIR)
        self.assertEqual(reparsed, self.registry)
        self.assertEqual(pretty_print(reparsed), pretty_print(self.registry))

    def test_pretty_print_3_every_pattern(self):
        registry = RuleRegistry((ComplianceRule('A', Precedence('x "q"', 'y')), ComplianceRule('B', Absence('tab\there')),
                                 ComplianceRule('C', Existence('z')), ComplianceRule('D', Response('x', 'y', timedelta(hours=36))),
                                 ComplianceRule('E', Response('x', 'y')), ComplianceRule('F', Content(ContentScope.event, 'amt', ContentOperator.member, ('1', '2'))),
                                 ComplianceRule('G', Content(ContentScope.case, 'country', ContentOperator.neq, ('SE',)))))
        self.assertEqual(parse_registry(pretty_print(registry)), registry)


class TestValidate(TestCase):
    def test_validate_1_unknown_activity(self):
        registry = load_registry(DATA_DIR / 'trade_rules.crl')
        event_log = merge_logs([read_events(DATA_DIR / 'business.csv'), read_events(DATA_DIR / 'checks.csv', Layer.compliance_check)])
        warnings = validate_registry(registry, event_log.activities)
        self.assertEqual([w.rule_id for w in warnings], ['R03'])
        self.assertEqual(str(warnings[0]), 'Rule R03 references activities not found in the event data: "Hard block removed manually"')

    def test_validate_2_all_known(self):
        registry = load_registry(DATA_DIR / 'registry.crl')
        self.assertEqual(validate_registry(registry, {'Shipment started', 'Delivery created'}), [])


if __name__ == '__main__':
    main()

# cSpell:ignore layeraudit crl
