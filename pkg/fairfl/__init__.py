# fairfl package
