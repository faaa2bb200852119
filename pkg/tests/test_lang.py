"""Unit tests for the lang module."""

# pylint: disable=missing-class-docstring,missing-function-docstring,invalid-name
# flake8: noqa

import os
from string import Template
from unittest import main, TestCase

from dotmap import DotMap

from layeraudit.lang import DEBUG_VARIABLE, LayerAuditError, LayerAuditException, dotmap_to_yaml, is_debug, yaml_to_dotmap


class SampleError(LayerAuditException):
    FIRST = LayerAuditError(1, Template('Value $value is bad'))
    SECOND = LayerAuditError(2, 'Plain message')


class TestExceptions(TestCase):
    def test_exception_1_template(self):
        try:
            raise SampleError(SampleError.FIRST, value=42)
        except SampleError as err:
            self.assertEqual(err.code, SampleError.FIRST.code)
            self.assertEqual(str(err), 'Value 42 is bad')
            self.assertEqual(err.vars, {'value': 42})
            self.assertIs(err.error, SampleError.FIRST)

    def test_exception_2_plain(self):
        try:
            raise SampleError(SampleError.SECOND)
        except SampleError as err:
            self.assertEqual(err.code, 2)
            self.assertEqual(str(err), 'Plain message')

    def test_exception_3_missing_variable(self):
        self.assertEqual(str(SampleError(SampleError.FIRST)), 'Value $value is bad')


class TestIsDebug(TestCase):
    def setUp(self):
        self._keeper = None
        if DEBUG_VARIABLE in os.environ:
            self._keeper = os.environ[DEBUG_VARIABLE]
            del os.environ[DEBUG_VARIABLE]

    def tearDown(self):
        os.environ.pop(DEBUG_VARIABLE, None)
        if self._keeper:
            os.environ[DEBUG_VARIABLE] = self._keeper

    def test_is_debug_1_False(self):
        self.assertFalse(is_debug())

    def test_is_debug_2_True(self):
        os.environ[DEBUG_VARIABLE] = '1'
        self.assertTrue(is_debug())

    def test_is_debug_3_SingleValue(self):
        os.environ[DEBUG_VARIABLE] = 'ENGINE'
        self.assertTrue(is_debug('ENGINE'))
        self.assertFalse(is_debug('WEBHOOK'))

    def test_is_debug_4_MultiValue(self):
        os.environ[DEBUG_VARIABLE] = 'ENGINE:WEBHOOK'
        self.assertTrue(is_debug('ENGINE'))
        self.assertTrue(is_debug('WEBHOOK'))
        self.assertFalse(is_debug('LAYOUT'))


class TestYaml(TestCase):
    def test_yaml_to_dotmap_1_mapping(self):
        config = yaml_to_dotmap('schema: 1\nevents:\n  business_flow: business.csv\n')
        self.assertEqual(config.schema, 1)
        self.assertEqual(config.events.business_flow, 'business.csv')

    def test_yaml_to_dotmap_2_empty(self):
        self.assertEqual(yaml_to_dotmap('').toDict(), {})

    def test_yaml_to_dotmap_3_not_mapping(self):
        with self.assertRaises(ValueError):
            yaml_to_dotmap('- a\n- b\n')

    def test_yaml_to_dotmap_4_not_dynamic(self):
        with self.assertRaises((AttributeError, KeyError)):
            _unused = yaml_to_dotmap('a: 1\n').missing

    def test_dotmap_to_yaml_1_order(self):
        self.assertEqual(dotmap_to_yaml(DotMap({'b': 1, 'a': [1, 2]})), 'b: 1\na:\n- 1\n- 2\n')


if __name__ == '__main__':
    main()

# cSpell:ignore dotmap layeraudit
